"""Phase-space grids and the sparse discrete generator.

Unknowns are cell averages f[ix, iv] flattened x-major (index ix * nvel + iv).
The collision operator is written in the divergence form
div_v(mu grad_v(f/mu)) with two-point fluxes; transport is first-order upwind
finite volume; the Maxwell reflection enters as incoming boundary fluxes built
from the outgoing cell values, so the boundary condition is a flux closure.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import KfpError
from .geometry import Domain
from .weights import chi

# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class BoundaryCell:
    cell: int
    normal: np.ndarray
    length: float  # face measure (1 in 1-D)
    iota: float
    outgoing: np.ndarray  # velocity indices with n.v > 0
    incoming: np.ndarray  # velocity indices with n.v < 0
    mirror: np.ndarray  # specular image index for every velocity index
    position: np.ndarray


@dataclass
class PhaseGrid:
    domain: Domain
    nx: int
    nv: int
    vmax: float
    x: np.ndarray  # (ncx,) in 1-D, (ncx, 2) in 2-D
    wx: np.ndarray
    v: np.ndarray  # (nvel, d)
    wv: np.ndarray
    mu_h: np.ndarray
    wall_h: np.ndarray  # discrete wall Maxwellian with unit half-flux
    boundary: list = field(default_factory=list)
    n_angles: int = 0
    n_rings: int = 0
    dx: float = 0.0

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def ncx(self) -> int:
        return len(self.wx)

    @property
    def nvel(self) -> int:
        return len(self.wv)

    @property
    def size(self) -> int:
        return self.ncx * self.nvel

    @property
    def speed(self) -> np.ndarray:
        return np.linalg.norm(self.v, axis=-1)

    @property
    def measure(self) -> float:
        """Discrete |Omega| (polygon area for the disk)."""
        return float(self.wx.sum())

    @property
    def weights(self) -> np.ndarray:
        """Flat phase-space quadrature weights w_x (x) w_v."""
        return np.kron(self.wx, self.wv)

    @property
    def f_inf(self) -> np.ndarray:
        return np.tile(self.mu_h, self.ncx) / self.measure

    def as_field(self, f) -> np.ndarray:
        return np.asarray(f, dtype=float).reshape(self.ncx, self.nvel)

    def mass(self, f) -> float:
        return float(self.weights @ np.ravel(f))

    def positions(self) -> np.ndarray:
        """Cell centres as an (ncx, d) array."""
        return self.x.reshape(self.ncx, -1)

    def field_from(self, fn) -> np.ndarray:
        """Flat field from fn(x, v) evaluated on the broadcast (ncx, nvel) mesh."""
        X = self.positions()[:, None, :]
        V = self.v[None, :, :]
        return np.asarray(fn(X, V), dtype=float).reshape(-1)


def _mu(r, d):
    return (2 * np.pi) ** (-d / 2) * np.exp(-np.asarray(r) ** 2 / 2)


def build_grid(domain: Domain, nx: int, nv: int, vmax: float = 6.0, n_angles: int | None = None,
               n_velocity_angles: int | None = None) -> PhaseGrid:
    """Tensor phase grid.

    Interval: ``nx`` uniform cells, ``nv`` symmetric velocity cells on
    [-vmax, vmax].  Disk: ``nx`` rings times ``n_angles`` sectors (default
    4 nx) and ``nv`` speed cells times the same number of velocity angles.
    """
    if nx < 4 or nv < 4:
        raise KfpError("nx and nv must be >= 4")
    if vmax < 4:
        raise KfpError("vmax must be >= 4")
    if domain.kind == "interval":
        if nv % 2:
            raise KfpError("nv must be even so the velocity grid is symmetric")
        return _grid_1d(domain, nx, nv, vmax)
    n_angles = n_angles or 4 * nx
    n_velocity_angles = n_velocity_angles or n_angles
    if n_velocity_angles != n_angles:
        raise KfpError(
            f"velocity angle count {n_velocity_angles} differs from spatial angle count {n_angles}: "
            "specular reflection would need interpolation"
        )
    if n_angles % 2 or n_angles < 4:
        raise KfpError("angle count must be even and >= 4")
    return _grid_disk(domain, nx, nv, vmax, n_angles)


def _normalize_maxwellians(v, wv, d):
    r = np.linalg.norm(v, axis=-1)
    mu = _mu(r, d)
    mu_h = mu / np.sum(mu * wv)
    return mu_h


def _grid_1d(domain, nx, nv, vmax):
    L = domain.extent
    dx = L / nx
    x = (np.arange(nx) + 0.5) * dx
    wx = np.full(nx, dx)
    dv = 2 * vmax / nv
    vc = -vmax + (np.arange(nv) + 0.5) * dv
    wv = np.full(nv, dv)
    v = vc[:, None]
    mu_h = _normalize_maxwellians(v, wv, 1)
    half = np.sum((mu_h * vc * wv)[vc > 0])
    wall_h = mu_h / half
    mirror = np.arange(nv)[::-1].copy()
    bnd = []
    for cell, n, pos in ((0, -1.0, 0.0), (nx - 1, 1.0, L)):
        vn = vc * n
        bnd.append(
            BoundaryCell(cell=cell, normal=np.array([n]), length=1.0, iota=domain.iota_at(pos),
                         outgoing=np.flatnonzero(vn > 0), incoming=np.flatnonzero(vn < 0), mirror=mirror,
                         position=np.array([pos]))
        )
    return PhaseGrid(domain, nx, nv, vmax, x, wx, v, wv, mu_h, wall_h, bnd, dx=dx)


def _grid_disk(domain, nr, ns, vmax, N):
    R = domain.extent
    dr = R / nr
    dth = 2 * np.pi / N
    ri = np.arange(nr) * dr
    ro = ri + dr
    theta = (np.arange(N) + 0.5) * dth
    area = 0.5 * np.sin(dth) * (ro**2 - ri**2)
    rmid = 0.5 * (ri + ro)
    # cell index = ir * N + k
    x = np.stack([np.outer(rmid, np.cos(theta)).ravel(), np.outer(rmid, np.sin(theta)).ravel()], axis=-1)
    wx = np.repeat(area, N)
    ds = vmax / ns
    s = (np.arange(ns) + 0.5) * ds
    phi = (np.arange(N) + 0.5) * dth
    # velocity index = j * N + m
    v = np.stack([np.outer(s, np.cos(phi)).ravel(), np.outer(s, np.sin(phi)).ravel()], axis=-1)
    wv = np.repeat(s * ds * dth, N)
    mu_h = _normalize_maxwellians(v, wv, 2)
    n0 = np.array([np.cos(theta[0]), np.sin(theta[0])])
    vn0 = v @ n0
    half = np.sum((mu_h * vn0 * wv)[vn0 > 0])
    wall_h = mu_h / half
    j = np.repeat(np.arange(ns), N)
    m = np.tile(np.arange(N), ns)
    bnd = []
    chord = 2 * R * np.sin(dth / 2)
    for k in range(N):
        n = np.array([np.cos(theta[k]), np.sin(theta[k])])
        vn = v @ n
        mirror = j * N + np.mod(2 * k + N // 2 - m, N)
        pos = R * np.cos(dth / 2) * n
        bnd.append(
            BoundaryCell(cell=(nr - 1) * N + k, normal=n, length=chord, iota=domain.iota_at(R * n),
                         outgoing=np.flatnonzero(vn > 1e-14), incoming=np.flatnonzero(vn < -1e-14),
                         mirror=mirror, position=pos)
        )
    return PhaseGrid(domain, nr, ns, vmax, x, wx, v, wv, mu_h, wall_h, bnd, n_angles=N, n_rings=nr, dx=dr)


# ---------------------------------------------------------------------------
# collision


def collision_velocity_matrix(grid: PhaseGrid) -> sp.csr_matrix:
    """Velocity-only collision matrix C acting on one spatial node."""
    wv = grid.wv
    nvel = grid.nvel
    d = grid.dim
    scale = np.sum(_mu(grid.speed, d) * wv)  # same normalisation as mu_h
    rows, cols, coef = [], [], []  # face (a, b, conductance)
    if d == 1:
        dv = wv[0]
        vf = grid.v[:-1, 0] + 0.5 * dv
        a = _mu(vf, 1) / scale / dv
        idx = np.arange(nvel - 1)
        rows.append(idx)
        cols.append(idx + 1)
        coef.append(a)
    else:
        N = grid.n_angles
        ns = grid.nv
        ds = grid.vmax / ns
        dphi = 2 * np.pi / N
        s = (np.arange(ns) + 0.5) * ds
        # radial faces between speed j and j+1
        sf = (np.arange(ns - 1) + 1.0) * ds
        a_r = sf * dphi * _mu(sf, 2) / scale / ds
        jj = np.repeat(np.arange(ns - 1), N)
        mm = np.tile(np.arange(N), ns - 1)
        rows.append(jj * N + mm)
        cols.append((jj + 1) * N + mm)
        coef.append(np.repeat(a_r, N))
        # angular faces between angle m and m+1 at speed j
        a_t = ds * _mu(s, 2) / scale / (s * dphi)
        jj = np.repeat(np.arange(ns), N)
        mm = np.tile(np.arange(N), ns)
        rows.append(jj * N + mm)
        cols.append(jj * N + np.mod(mm + 1, N))
        coef.append(np.repeat(a_t, N))
    a_idx = np.concatenate(rows)
    b_idx = np.concatenate(cols)
    c = np.concatenate(coef)
    # graph Laplacian on h = f / mu_h, then divide by cell volume
    lap = sp.coo_matrix(
        (np.concatenate([c, c, -c, -c]), (np.concatenate([a_idx, b_idx, a_idx, b_idx]),
                                          np.concatenate([b_idx, a_idx, a_idx, b_idx]))),
        shape=(nvel, nvel),
    ).tocsr()
    return (sp.diags(1.0 / wv) @ lap @ sp.diags(1.0 / grid.mu_h)).tocsr()


def assemble_collision(grid: PhaseGrid) -> sp.csr_matrix:
    return sp.kron(sp.identity(grid.ncx, format="csr"), collision_velocity_matrix(grid), format="csr")


# ---------------------------------------------------------------------------
# transport with Maxwell reflection


def _interior_faces(grid: PhaseGrid):
    """(cell_a, cell_b, normal a->b, length) for every interior face."""
    if grid.dim == 1:
        a = np.arange(grid.nx - 1)
        return a, a + 1, np.ones((len(a), 1)), np.ones(len(a))
    N, nr, dr = grid.n_angles, grid.n_rings, grid.dx
    dth = 2 * np.pi / N
    theta = (np.arange(N) + 0.5) * dth
    A, B, nrm, ln = [], [], [], []
    # chord faces between ring ir and ir+1
    for ir in range(nr - 1):
        ro = (ir + 1) * dr
        A.append(ir * N + np.arange(N))
        B.append((ir + 1) * N + np.arange(N))
        nrm.append(np.stack([np.cos(theta), np.sin(theta)], axis=-1))
        ln.append(np.full(N, 2 * ro * np.sin(dth / 2)))
    # ray faces between sector k and k+1
    alpha = (np.arange(N) + 1) * dth
    for ir in range(nr):
        A.append(ir * N + np.arange(N))
        B.append(ir * N + np.mod(np.arange(N) + 1, N))
        nrm.append(np.stack([-np.sin(alpha), np.cos(alpha)], axis=-1))
        ln.append(np.full(N, dr))
    return np.concatenate(A), np.concatenate(B), np.concatenate(nrm), np.concatenate(ln)


@dataclass
class TransportParts:
    interior: sp.csr_matrix  # upwind interior fluxes and boundary outflow
    specular: sp.csr_matrix  # incoming specular flux (scaled by 1 - iota)
    diffuse: sp.csr_matrix  # incoming diffusive flux (scaled by iota)
    specular_pattern: sp.csr_matrix  # 0/1 pattern of the specular coupling

    @property
    def total(self) -> sp.csr_matrix:
        return (self.interior + self.specular + self.diffuse).tocsr()


def assemble_transport_parts(grid: PhaseGrid) -> TransportParts:
    nvel, V, wx = grid.nvel, grid.v, grid.wx
    size = grid.size
    ca, cb, nrm, ln = _interior_faces(grid)
    vn = nrm @ V.T  # (nfaces, nvel)
    iv = np.broadcast_to(np.arange(nvel), vn.shape)
    pos = vn > 0
    up = np.where(pos, ca[:, None], cb[:, None])
    dn = np.where(pos, cb[:, None], ca[:, None])
    flux = ln[:, None] * np.abs(vn)
    rows = [up * nvel + iv, dn * nvel + iv]
    cols = [up * nvel + iv, up * nvel + iv]
    vals = [-flux / wx[up], flux / wx[dn]]
    spec_r, spec_c, spec_v = [], [], []
    dif_r, dif_c, dif_v = [], [], []
    for b in grid.boundary:
        c = b.cell
        vnb = V @ b.normal
        out, inc = b.outgoing, b.incoming
        fo = b.length * vnb[out] / wx[c]
        rows.append(c * nvel + out)
        cols.append(c * nvel + out)
        vals.append(-fo)
        fi = b.length * np.abs(vnb[inc]) / wx[c]
        spec_r.append(c * nvel + inc)
        spec_c.append(c * nvel + b.mirror[inc])
        spec_v.append((1 - b.iota) * fi)
        # rank-one diffusive re-emission: wall_h(v) * sum_out f(w) (n.w) w_v
        emit = fi * grid.wall_h[inc]
        collect = vnb[out] * grid.wv[out]
        dif_r.append(np.repeat(c * nvel + inc, len(out)))
        dif_c.append(np.tile(c * nvel + out, len(inc)))
        dif_v.append(b.iota * np.outer(emit, collect).ravel())

    def mk(r, cc, vv):
        if not r:
            return sp.csr_matrix((size, size))
        return sp.coo_matrix(
            (np.concatenate([np.ravel(a) for a in vv]),
             (np.concatenate([np.ravel(a) for a in r]), np.concatenate([np.ravel(a) for a in cc]))),
            shape=(size, size),
        ).tocsr()

    pattern = mk(spec_r, spec_c, [np.ones_like(a) for a in spec_v])
    return TransportParts(mk(rows, cols, vals), mk(spec_r, spec_c, spec_v), mk(dif_r, dif_c, dif_v), pattern)


def assemble_transport_with_reflection(grid: PhaseGrid) -> sp.csr_matrix:
    return assemble_transport_parts(grid).total


# ---------------------------------------------------------------------------
# generator


@dataclass
class Generator:
    grid: PhaseGrid
    matrix: sp.csr_matrix
    collision: sp.csr_matrix
    transport: sp.csr_matrix
    parts: TransportParts | None = None
    absorbed: sp.csr_matrix | None = None  # the A part when split
    kind: str = "forward"

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def apply(self, f) -> np.ndarray:
        return self.matrix @ np.ravel(f)

    def cfl_limit(self) -> float:
        """Largest explicit-transport step keeping the update nonnegative."""
        d = -self.transport.diagonal()
        return float(1.0 / d.max()) if d.max() > 0 else np.inf


def assemble_generator(grid: PhaseGrid) -> Generator:
    C = assemble_collision(grid)
    parts = assemble_transport_parts(grid)
    T = parts.total
    return Generator(grid, (C + T).tocsr(), C, T, parts)


def _w_adjoint(grid: PhaseGrid, M: sp.spmatrix) -> sp.csr_matrix:
    w = grid.weights
    return (sp.diags(1.0 / w) @ M.T @ sp.diags(w)).tocsr()


def assemble_dual(gen: Generator) -> Generator:
    """Adjoint of L for the inner product sum f g w_x w_v: L* = W^-1 L^T W."""
    g = gen.grid
    kind = "dual" if gen.kind == "forward" else "forward"
    absorbed = _w_adjoint(g, gen.absorbed) if gen.absorbed is not None else None
    return Generator(g, _w_adjoint(g, gen.matrix), _w_adjoint(g, gen.collision), _w_adjoint(g, gen.transport),
                     None, absorbed, kind)


def split_generator(gen: Generator, M: float, R: float) -> tuple[sp.csr_matrix, Generator]:
    """A = M chi(|v|/R) as a diagonal, and the generator B = L - A."""
    if M < 0 or R <= 0:
        raise KfpError("need M >= 0 and R > 0")
    g = gen.grid
    a = M * np.tile(chi(g.speed / R), g.ncx)
    A = sp.diags(a, format="csr")
    B = Generator(g, (gen.matrix - A).tocsr(), gen.collision, gen.transport, gen.parts, A, gen.kind)
    return A, B


def export_coo(matrix: sp.spmatrix, path) -> None:
    """Write a sparse operator as a coordinate-format Matrix Market file."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix), precision=17)


# ---------------------------------------------------------------------------
# traces


@dataclass(frozen=True)
class TraceField:
    boundary_index: int
    sign: str  # "+" outgoing, "-" incoming
    velocities: np.ndarray
    values: np.ndarray
    vn: np.ndarray  # n.v at those velocities
    wv: np.ndarray


def traces(grid: PhaseGrid, f) -> list[tuple[TraceField, TraceField]]:
    """Outgoing cell traces and the incoming traces given by the reflection closure."""
    F = grid.as_field(f)
    out = []
    for i, b in enumerate(grid.boundary):
        vn = grid.v @ b.normal
        fo = F[b.cell]
        J = np.sum(fo[b.outgoing] * vn[b.outgoing] * grid.wv[b.outgoing])
        fin = (1 - b.iota) * fo[b.mirror[b.incoming]] + b.iota * grid.wall_h[b.incoming] * J
        plus = TraceField(i, "+", b.outgoing, fo[b.outgoing], vn[b.outgoing], grid.wv[b.outgoing])
        minus = TraceField(i, "-", b.incoming, fin, vn[b.incoming], grid.wv[b.incoming])
        out.append((plus, minus))
    return out


def boundary_mass_flux(grid: PhaseGrid, f) -> np.ndarray:
    """Net normal mass flux sum_v gamma f (n.v) w_v at every boundary cell."""
    return np.array([np.sum(p.values * p.vn * p.wv) + np.sum(m.values * m.vn * m.wv) for p, m in traces(grid, f)])
