"""Spatial domains: the interval (0, L) and the disk of radius R centred at 0."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import KfpError

BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class BoundaryNode:
    position: np.ndarray
    normal: np.ndarray
    weight: float
    iota: float


@dataclass(frozen=True)
class Domain:
    """Bounded domain described by its signed distance to the boundary.

    ``iota`` is the accommodation coefficient, either a constant or a
    piecewise-constant table: two entries (left, right) for the interval,
    or equal angular sectors for the disk.
    """

    kind: str
    extent: float
    iota: float | tuple[float, ...] = 1.0

    def __post_init__(self):
        if self.kind not in ("interval", "disk"):
            raise KfpError(f"unsupported domain kind {self.kind!r}")
        if not self.extent > 0:
            raise KfpError("domain extent must be positive")
        table = np.atleast_1d(np.asarray(self.iota, dtype=float))
        if np.any(table < 0) or np.any(table > 1):
            raise KfpError("accommodation coefficient must lie in [0, 1]")
        if self.kind == "interval" and table.size not in (1, 2):
            raise KfpError("interval accommodation table needs 1 or 2 entries")
        if not np.isscalar(self.iota):
            object.__setattr__(self, "iota", tuple(float(t) for t in table))

    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else 2

    @property
    def measure(self) -> float:
        """|Omega|."""
        if self.kind == "interval":
            return self.extent
        return np.pi * self.extent**2

    @property
    def boundary_measure(self) -> float:
        if self.kind == "interval":
            return 2.0
        return 2 * np.pi * self.extent

    @property
    def diameter_bound(self) -> float:
        """D = sup delta (half the diameter)."""
        return self.extent / 2 if self.kind == "interval" else self.extent

    def signed_distance(self, x) -> np.ndarray | float:
        """delta(x): distance to the boundary, negative outside."""
        x = np.asarray(x, dtype=float)
        if self.kind == "interval":
            out = np.minimum(x, self.extent - x)
        else:
            if x.shape[-1] != 2:
                raise KfpError("disk points must have two coordinates")
            out = self.extent - np.linalg.norm(x, axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def normal_field(self, x) -> np.ndarray:
        """-grad delta, defined everywhere except the kink/centre (set to 0 there)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "interval":
            return -np.sign(self.extent / 2 - x)
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            n = np.where(r > 0, x / np.where(r > 0, r, 1.0), 0.0)
        return n

    def outward_normal(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        dist = self.signed_distance(x)
        if abs(dist) > BOUNDARY_TOL:
            raise KfpError(f"point {x.tolist()} is not on the boundary (delta = {dist:.3g})")
        if self.kind == "interval":
            return -1.0 if x < self.extent / 2 else 1.0
        return x / np.linalg.norm(x)

    def iota_at(self, x) -> float:
        table = np.atleast_1d(np.asarray(self.iota, dtype=float))
        if table.size == 1:
            return float(table[0])
        x = np.asarray(x, dtype=float)
        if self.kind == "interval":
            return float(table[0] if x < self.extent / 2 else table[1])
        theta = np.mod(np.arctan2(x[1], x[0]), 2 * np.pi)
        k = int(np.floor(theta / (2 * np.pi) * table.size)) % table.size
        return float(table[k])


def boundary_quadrature(domain: Domain, resolution: int = 1) -> list[BoundaryNode]:
    """Quadrature nodes on the boundary; weights sum to |boundary|.

    The interval always gives its two endpoints (counting measure); the disk
    gives ``resolution`` equally spaced nodes at angles 2 pi k / resolution.
    """
    if resolution < 1:
        raise KfpError("resolution must be >= 1")
    if domain.kind == "interval":
        nodes = []
        for x in (0.0, domain.extent):
            nodes.append(
                BoundaryNode(
                    position=np.array([x]),
                    normal=np.array([domain.outward_normal(x)]),
                    weight=1.0,
                    iota=domain.iota_at(x),
                )
            )
        return nodes
    R = domain.extent
    theta = 2 * np.pi * np.arange(resolution) / resolution
    w = 2 * np.pi * R / resolution
    nodes = []
    for t in theta:
        pos = R * np.array([np.cos(t), np.sin(t)])
        nodes.append(
            BoundaryNode(position=pos, normal=np.array([np.cos(t), np.sin(t)]), weight=w, iota=domain.iota_at(pos))
        )
    return nodes


def domain_from_config(kind: str, extent: float, iota: float | Sequence[float]) -> Domain:
    if np.ndim(iota) > 0:
        iota = tuple(float(t) for t in iota)
        if len(iota) == 1:
            iota = iota[0]
    return Domain(kind=kind, extent=float(extent), iota=iota)
