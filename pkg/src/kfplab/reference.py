"""Exact Gaussian solutions of the free-space equation and the Kolmogorov envelope.

In free space the equation d_t f + v.grad_x f = Delta_v f + div_v(v f) is the
forward equation of dX = V dt, dV = -V dt + sqrt(2) dW, so Gaussian data stay
Gaussian.  With A = [[0, I], [0, -I]] and Q = diag(0, 2I):

    mean(t) = e^{tA} mean(0)
    Sigma(t) = e^{tA} Sigma(0) e^{tA}^T + Sigma_pt(t)

where Sigma_pt, the covariance started from a point mass, has per-dimension
blocks xx = 2t - 4(1 - e^-t) + (1 - e^-2t), xv = (1 - e^-t)^2, vv = 1 - e^-2t.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import KfpError


@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray  # (2 d',) ordered (x, v)
    cov: np.ndarray  # (2 d', 2 d')

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        cov = np.asarray(self.cov, dtype=float)
        n = mean.size
        if n % 2 or cov.shape != (n, n):
            raise KfpError("Gaussian state needs a (2d,) mean and a (2d, 2d) covariance")
        if not np.allclose(cov, cov.T, rtol=1e-12, atol=1e-300):
            raise KfpError("covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))

    @property
    def dim(self) -> int:
        return self.mean.size // 2

    @classmethod
    def point_mass(cls, x0, v0) -> "GaussianState":
        x0, v0 = np.atleast_1d(x0).astype(float), np.atleast_1d(v0).astype(float)
        n = 2 * x0.size
        return cls(np.concatenate([x0, v0]), np.zeros((n, n)))

    @classmethod
    def isotropic(cls, x0, v0, sx: float, sv: float) -> "GaussianState":
        x0, v0 = np.atleast_1d(x0).astype(float), np.atleast_1d(v0).astype(float)
        d = x0.size
        return cls(np.concatenate([x0, v0]), np.diag([sx**2] * d + [sv**2] * d))


def drift_matrix(d: int) -> np.ndarray:
    I = np.eye(d)
    Z = np.zeros((d, d))
    return np.block([[Z, I], [Z, -I]])


def flow_matrix(t: float, d: int) -> np.ndarray:
    """e^{tA} in closed form."""
    I = np.eye(d)
    Z = np.zeros((d, d))
    e = np.exp(-t)
    return np.block([[I, (1 - e) * I], [Z, e * I]])


def point_mass_covariance(t: float, d: int) -> np.ndarray:
    em = -np.expm1(-t)  # 1 - e^-t, accurate for small t
    em2 = -np.expm1(-2 * t)
    if t < 1e-3:
        # series of 2t - 4(1 - e^-t) + (1 - e^-2t) to avoid cancellation
        xx = 2 * t**3 / 3 - t**4 / 2 + 7 * t**5 / 30 - t**6 / 12
    else:
        xx = 2 * t - 4 * em + em2
    I = np.eye(d)
    return np.block([[xx * I, em**2 * I], [em**2 * I, em2 * I]])


def mehler_propagate(state: GaussianState, t: float) -> GaussianState:
    if t < 0:
        raise KfpError("t must be nonnegative")
    d = state.dim
    E = flow_matrix(t, d)
    return GaussianState(E @ state.mean, E @ state.cov @ E.T + point_mass_covariance(t, d))


def lyapunov_rk4(cov0: np.ndarray, t: float, steps: int = 2000) -> np.ndarray:
    """RK4 integration of Sigma' = A Sigma + Sigma A^T + Q (validation oracle)."""
    n = cov0.shape[0]
    d = n // 2
    A = drift_matrix(d)
    Q = np.diag([0.0] * d + [2.0] * d)
    rhs = lambda S: A @ S + S @ A.T + Q  # noqa: E731
    S = np.array(cov0, dtype=float)
    h = t / steps
    for _ in range(steps):
        k1 = rhs(S)
        k2 = rhs(S + 0.5 * h * k1)
        k3 = rhs(S + 0.5 * h * k2)
        k4 = rhs(S + h * k3)
        S = S + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return S


def mehler_density(state: GaussianState, x, v, log: bool = False) -> np.ndarray:
    """Gaussian density (or its logarithm) at phase points; x and v have trailing dimension d'."""
    d = state.dim
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if d == 1:
        x = x[..., None] if x.shape[-1:] != (1,) else x
        v = v[..., None] if v.shape[-1:] != (1,) else v
    z = np.concatenate(np.broadcast_arrays(x, v), axis=-1) - state.mean
    try:
        c = np.linalg.cholesky(state.cov)
    except np.linalg.LinAlgError as exc:
        raise KfpError("singular covariance") from exc
    y = np.linalg.solve(c, z[..., None])[..., 0] if z.ndim > 1 else np.linalg.solve(c, z)
    logdet = 2 * np.sum(np.log(np.diag(c)))
    out = -0.5 * np.sum(y**2, axis=-1) - 0.5 * logdet - d * np.log(2 * np.pi)
    return out if log else np.exp(out)


def density_sup(state: GaussianState) -> float:
    d = state.dim
    return float((2 * np.pi) ** (-d) / np.sqrt(np.linalg.det(state.cov)))


def marginal_mass_outside(state: GaussianState, domain) -> float:
    """Mass of the x-marginal outside the domain (exact for the interval, a bound for the disk)."""
    d = state.dim
    S = state.cov[:d, :d]
    m = state.mean[:d]
    if domain.kind == "interval":
        s = np.sqrt(S[0, 0])
        if s == 0:
            return 0.0 if 0 < m[0] < domain.extent else 1.0
        return float(special.ndtr(-m[0] / s) + special.ndtr((m[0] - domain.extent) / s))
    lam = float(np.linalg.eigvalsh(S).max())
    r = domain.extent - np.linalg.norm(m)
    if r <= 0:
        return 1.0
    return float(np.exp(-r**2 / (2 * lam))) if lam > 0 else 0.0


# ---------------------------------------------------------------------------
# Kolmogorov envelope


@dataclass(frozen=True)
class KolmogorovKernelParams:
    C1: float
    C2: float
    tau: float

    def __post_init__(self):
        if not (self.C1 > 0 and self.C2 > 0 and self.tau > 0):
            raise KfpError("kernel parameters must be positive")


def kernel_envelope(params: KolmogorovKernelParams, x, v, d: int = 1, log: bool = False) -> np.ndarray:
    """(C1 / tau^{2d}) exp(-(3 C2 / tau^3)|x - tau v / 2|^2 - (C2 / (4 tau))|v|^2)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if d == 1:
        y2 = (x - params.tau * v / 2) ** 2
        v2 = v**2
    else:
        y2 = np.sum((x - params.tau * v / 2) ** 2, axis=-1)
        v2 = np.sum(v**2, axis=-1)
    t = params.tau
    out = np.log(params.C1) - 2 * d * np.log(t) - 3 * params.C2 / t**3 * y2 - params.C2 / (4 * t) * v2
    return out if log else np.exp(out)


def fit_envelope(ts, xs, vs, d: int = 1, C2: float = 1.0) -> float:
    """Smallest C1 such that the envelope with the given C2 dominates the point-mass density on the samples.

    ``xs`` and ``vs`` carry a trailing axis of length d and broadcast against each other.
    """
    xs, vs = np.asarray(xs, dtype=float), np.asarray(vs, dtype=float)
    if xs.shape[-1] != d or vs.shape[-1] != d:
        raise KfpError("sample arrays need a trailing axis of length d")
    ex, ev = (xs[..., 0], vs[..., 0]) if d == 1 else (xs, vs)
    best = 0.0
    for t in ts:
        st = mehler_propagate(GaussianState.point_mass(np.zeros(d), np.zeros(d)), t)
        # log domain: both factors underflow far from the centre
        lr = mehler_density(st, xs, vs, log=True) - kernel_envelope(KolmogorovKernelParams(1.0, C2, t), ex, ev, d, log=True)
        best = max(best, float(np.exp(np.max(lr))))
    return best


# ---------------------------------------------------------------------------
# comparison with a grid solution


def project_to_grid(state: GaussianState, grid, order: int = 4) -> np.ndarray:
    """Cell averages of the Gaussian density on a 1-D phase grid (Gauss-Legendre per cell)."""
    if grid.dim != 1:
        return grid.field_from(lambda X, V: mehler_density(state, X, V))
    xg, wg = np.polynomial.legendre.leggauss(order)
    dx, dv = grid.dx, grid.wv[0]
    xs = (grid.x[:, None] + 0.5 * dx * xg[None, :]).ravel()
    vs = (grid.v[:, 0][:, None] + 0.5 * dv * xg[None, :]).ravel()
    X, V = np.meshgrid(xs, vs, indexing="ij")
    dens = mehler_density(state, X[..., None], V[..., None])
    dens = dens.reshape(grid.ncx, order, grid.nvel, order)
    return (np.einsum("iajb,a,b->ij", dens, wg, wg) / 4.0).ravel()


def interior_compare(grid, f, state0: GaussianState, t: float, margin: float = 0.0,
                     containment_tol: float = 1e-6) -> dict:
    """L1 distance between a grid field at time t and the free-space Gaussian from state0.

    The comparison region is the set of cells at distance > margin from the wall.
    """
    st = mehler_propagate(state0, t)
    outside = marginal_mass_outside(st, grid.domain)
    if outside >= containment_tol:
        raise KfpError(f"reference mass outside the domain {outside:.3e} exceeds {containment_tol:g}")
    ref = project_to_grid(st, grid)
    delta = np.asarray(grid.domain.signed_distance(grid.x), dtype=float).reshape(-1)
    mask = np.repeat(delta > margin, grid.nvel)
    err = float(np.sum((grid.weights * np.abs(np.ravel(f) - ref))[mask]))
    return {"t": t, "l1_error": err, "containment_mass": outside, "reference_mass": float(grid.weights @ ref)}


def ou_variance_check(t: float) -> float:
    """Velocity variance from a point mass; tends to 1 as t grows."""
    return float(point_mass_covariance(t, 1)[1, 1])


def density_mass(state: GaussianState, L: float = 12.0, n: int = 401) -> float:
    """Trapezoid mass of a 1-D Gaussian state on a box around its mean."""
    if state.dim != 1:
        raise KfpError("density_mass is 1-D only")
    sx, sv = np.sqrt(np.diag(state.cov))
    xs = state.mean[0] + np.linspace(-L, L, n) * sx
    vs = state.mean[1] + np.linspace(-L, L, n) * sv
    X, V = np.meshgrid(xs, vs, indexing="ij")
    D = mehler_density(state, X[..., None], V[..., None])
    return float(integrate.trapezoid(integrate.trapezoid(D, vs, axis=1), xs))
