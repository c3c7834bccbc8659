"""Neumann Poisson solver, macroscopic decomposition and a coercivity certificate.

The Hilbert space is L^2(mu^-1 dx dv) discretised with the cell weights and the
discrete Maxwellian mu_h.  The twisted product adds eps-weighted cross terms
(grad (-Delta)^-1 rho_f, j_g) + (grad (-Delta)^-1 rho_g, j_f), which are linear
in f and g, so they are assembled once as a matrix K and the twisted Gram
matrix is G = H + eps (K + K^T).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import Generator, PhaseGrid
from .errors import KfpError

EPS_SCAN = tuple(2.0**-k for k in range(1, 9))
DENSE_EIG_LIMIT = 5000
EIG_LIMIT = 40_000


# ---------------------------------------------------------------------------
# Poisson with Neumann condition


@dataclass
class PoissonSolution:
    u: np.ndarray
    grad: np.ndarray  # (ncx, d)
    boundary_flux: np.ndarray  # n.(grad u + eta2) at boundary cells
    mean: float


def _disk_laplacian(grid: PhaseGrid) -> sp.csr_matrix:
    """Two-point flux Laplacian (negative semidefinite) times cell area."""
    N, nr, dr = grid.n_angles, grid.n_rings, grid.dx
    dth = 2 * np.pi / N
    rows, cols, vals = [], [], []

    def face(a, b, t):
        rows.extend([a, b, a, b])
        cols.extend([b, a, a, b])
        vals.extend([t, t, -t, -t])

    for ir in range(nr):
        rm = (ir + 0.5) * dr
        for k in range(N):
            c = ir * N + k
            if ir < nr - 1:
                face(c, c + N, 2 * (ir + 1) * dr * np.sin(dth / 2) / dr)
            face(c, ir * N + (k + 1) % N, dr / (2 * rm * np.sin(dth / 2)))
    n = grid.ncx
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def _disk_faces(grid: PhaseGrid):
    from .discretization import _interior_faces

    return _interior_faces(grid)


def _disk_gradient(grid, u):
    """Green-Gauss gradient sum_faces l n (u_face - u_c) / |c|; boundary faces carry u_c."""
    ca, cb, nrm, ln = _disk_faces(grid)
    g = np.zeros((grid.ncx, 2))
    jump = 0.5 * (u[cb] - u[ca])
    np.add.at(g, ca, (ln * jump)[:, None] * nrm)
    np.add.at(g, cb, (ln * jump)[:, None] * nrm)
    return g / grid.wx[:, None]


def poisson_neumann(grid: PhaseGrid, rho, eta2=None, tol: float = 1e-8) -> PoissonSolution:
    """Mean-zero solution of -Delta u = rho + div eta2 with n.(grad u + eta2) = 0.

    This is the strong form of int grad u . grad w = int (w rho - grad w . eta2).
    """
    rho = np.asarray(rho, dtype=float)
    wx = grid.wx
    total = float(wx @ rho)
    if abs(total) > tol * max(1.0, float(wx @ np.abs(rho))):
        raise KfpError(f"compatibility violated: integral of the source is {total:.3e}")
    d = grid.dim
    e2 = np.zeros((grid.ncx, d)) if eta2 is None else np.asarray(eta2, dtype=float).reshape(grid.ncx, d)
    if d == 1:
        dx = grid.dx
        Q = np.concatenate([[0.0], np.cumsum(rho) * dx])  # int_0^x rho at faces
        Q[-1] = 0.0
        ef = np.concatenate([[e2[0, 0]], 0.5 * (e2[1:, 0] + e2[:-1, 0]), [e2[-1, 0]]])
        # face gradient; boundary faces satisfy the Neumann closure exactly
        gface = -Q - ef
        u = np.concatenate([[0.0], np.cumsum(gface[1:-1] * dx)])
        mean = float(wx @ u / wx.sum())
        u = u - mean
        grad = 0.5 * (gface[:-1] + gface[1:])
        bflux = np.array([-(gface[0] + e2[0, 0]), gface[-1] + e2[-1, 0]])
        return PoissonSolution(u, grad[:, None], bflux, float(wx @ u))
    lap = _disk_laplacian(grid)
    ca, cb, nrm, ln = _disk_faces(grid)
    # div eta2 * area on interior faces only (natural boundary condition)
    ef = 0.5 * np.sum((e2[ca] + e2[cb]) * nrm, axis=1) * ln
    div = np.zeros(grid.ncx)
    np.add.at(div, ca, -ef)
    np.add.at(div, cb, ef)
    # int grad u grad w = int w rho - grad w . eta2  =>  -lap u = rho |c| - div_faces
    rhs = rho * wx - div
    n = grid.ncx
    A = sp.bmat([[-lap, wx[:, None]], [wx[None, :], None]], format="csc")
    sol = spla.spsolve(A, np.concatenate([rhs, [0.0]]))
    u = sol[:n]
    grad = _disk_gradient(grid, u)
    bflux = np.array([(grad[b.cell] + e2[b.cell]) @ b.normal for b in grid.boundary])
    return PoissonSolution(u, grad, bflux, float(wx @ u))


def poisson_gradient_matrix(grid: PhaseGrid) -> np.ndarray:
    """Dense map rho -> grad (-Delta)^-1 (rho - mean rho), shape (ncx * d, ncx)."""
    n, wx = grid.ncx, grid.wx
    P = np.eye(n) - np.outer(np.ones(n), wx) / wx.sum()
    cols = []
    for i in range(n):
        cols.append(poisson_neumann(grid, P[:, i]).grad.reshape(-1))
    return np.array(cols).T


def h1_norm(grid: PhaseGrid, sol: PoissonSolution) -> float:
    return float(np.sqrt(grid.wx @ sol.u**2 + grid.wx @ np.sum(sol.grad**2, axis=1)))


# ---------------------------------------------------------------------------
# decomposition and twisted product


def h_weights(grid: PhaseGrid) -> np.ndarray:
    return grid.weights / np.tile(grid.mu_h, grid.ncx)


def h_product(grid: PhaseGrid, f, g) -> float:
    return float(np.sum(h_weights(grid) * np.ravel(f) * np.ravel(g)))


def macro_decompose(grid: PhaseGrid, f):
    """(pi f, f_perp) with pi f = rho_f mu_h."""
    F = grid.as_field(f)
    rho = F @ grid.wv
    pf = np.outer(rho, grid.mu_h).ravel()
    return pf, np.ravel(f) - pf


class TwistedProduct:
    """((f, g)) = (f, g)_H + eps B(f, g) + eps B(g, f), B(f, g) = (grad(-Delta)^-1 rho_f, j_g)."""

    def __init__(self, grid: PhaseGrid, eps: float):
        if not 0 <= eps < 1:
            raise KfpError("eps must lie in [0, 1)")
        self.grid = grid
        self.eps = eps
        self.K = cross_matrix(grid)
        self.H = sp.diags(h_weights(grid))

    def B(self, f, g) -> float:
        return float(np.ravel(f) @ (self.K @ np.ravel(g)))

    def __call__(self, f, g) -> float:
        return h_product(self.grid, f, g) + self.eps * (self.B(f, g) + self.B(g, f))

    def gram(self) -> np.ndarray:
        return self.H.toarray() + self.eps * (self.K + self.K.T)


_CROSS_CACHE: dict = {}


def cross_matrix(grid: PhaseGrid) -> np.ndarray:
    """Dense K with f^T K g = sum_x w_x grad u_f . j_g."""
    key = id(grid)
    hit = _CROSS_CACHE.get(key)
    if hit is not None and hit[0] is grid:
        return hit[1]
    n, d = grid.ncx, grid.dim
    P = poisson_gradient_matrix(grid)  # (n*d, n)
    R = sp.kron(sp.identity(n), grid.wv[None, :])  # f -> rho
    J = [sp.kron(sp.identity(n), (grid.wv * grid.v[:, a])[None, :]) for a in range(d)]
    K = np.zeros((grid.size, grid.size))
    Rd = R.toarray()
    for a in range(d):
        Pa = P[a::d, :]  # component a of grad u, (n, n)
        left = Rd.T @ Pa.T * grid.wx[None, :]  # (size, n)
        K += (sp.csr_matrix(left) @ J[a]).toarray()
    _CROSS_CACHE.clear()
    _CROSS_CACHE[key] = (grid, K)
    return K


@dataclass
class DirichletForm:
    D1: float
    D2: float
    D3: float

    @property
    def total(self) -> float:
        return self.D1 + self.D2 + self.D3


def dirichlet_form(gen: Generator, f, eps: float) -> DirichletForm:
    """D1 = (-Lf, f)_H, D2 = eps B(f, -Lf), D3 = eps B(-Lf, f)."""
    grid = gen.grid
    f = np.ravel(f)
    mLf = -gen.apply(f)
    D1 = h_product(grid, mLf, f)
    if eps == 0:
        return DirichletForm(D1, 0.0, 0.0)
    K = cross_matrix(grid)
    return DirichletForm(D1, eps * float(f @ K @ mLf), eps * float(mLf @ K @ f))


def boundary_defect(grid: PhaseGrid, f) -> float:
    """sum over walls of iota(2 - iota) int |gamma_+ f - M J|^2 / mu (n.v)_+ dv."""
    F = grid.as_field(f)
    total = 0.0
    for b in grid.boundary:
        vn = grid.v @ b.normal
        o = b.outgoing
        J = np.sum(F[b.cell, o] * vn[o] * grid.wv[o])
        dev = F[b.cell, o] - grid.wall_h[o] * J
        total += b.iota * (2 - b.iota) * b.length * np.sum(dev**2 / grid.mu_h[o] * vn[o] * grid.wv[o])
    return float(total)


# ---------------------------------------------------------------------------
# certificate


@dataclass
class CoercivityCertificate:
    eps: float
    lambda_h: float
    c1: float
    c2: float
    curve: list = field(default_factory=list)
    grid: dict = field(default_factory=dict)
    method: str = "dense"
    residual: float = 0.0

    @property
    def valid(self) -> bool:
        return self.lambda_h > 0 and np.isfinite(self.c1) and self.c1 > 0

    def as_dict(self) -> dict:
        return {"eps": self.eps, "lambda_h": self.lambda_h, "c1": self.c1, "c2": self.c2, "grid": self.grid,
                "method": self.method, "residual": self.residual, "valid": self.valid,
                "curve": [dict(zip(("eps", "lambda_h", "c1", "c2"), row)) for row in self.curve]}


def mass_zero_basis(grid: PhaseGrid) -> np.ndarray:
    """Orthonormal basis of {f : sum w f = 0}."""
    return scipy.linalg.null_space(grid.weights[None, :])


def _pencil_min(S, G):
    """Smallest eigenvalue of S x = lam G x for symmetric S and positive definite G."""
    return float(scipy.linalg.eigh(S, G, eigvals_only=True, subset_by_index=[0, 0])[0])


def coercivity_certificate(gen: Generator, eps_scan=EPS_SCAN) -> CoercivityCertificate:
    """lambda_h(eps) = min over mass-zero f of ((-Lf, f)) / ((f, f)); best eps returned."""
    grid = gen.grid
    n = gen.size
    if n > EIG_LIMIT:
        raise KfpError(f"state dimension {n} exceeds the eigensolver limit {EIG_LIMIT}")
    L = gen.matrix
    Hd = h_weights(grid)
    K = cross_matrix(grid)
    info = {"kind": grid.domain.kind, "nx": grid.nx, "nv": grid.nv, "vmax": grid.vmax, "size": n}
    curve = []
    method = "dense" if n <= DENSE_EIG_LIMIT else "lobpcg"
    Q = mass_zero_basis(grid) if method == "dense" else None
    Ld = L.toarray()
    for eps in eps_scan:
        G = np.diag(Hd) + eps * (K + K.T)
        S = -0.5 * (G @ Ld + Ld.T @ G)
        if method == "dense":
            Gq = Q.T @ G @ Q
            Hq = Q.T @ (Hd[:, None] * Q)
            ev = scipy.linalg.eigh(Gq, Hq, eigvals_only=True)
            c1sq, c2sq = ev[0], ev[-1]
            if c1sq <= 0:
                curve.append((eps, -np.inf, 0.0, float(np.sqrt(max(c2sq, 0)))))
                continue
            lam = _pencil_min(Q.T @ S @ Q, Gq)
        else:
            lam, c1sq, c2sq = _lobpcg_pencil(S, G, Hd, grid.weights)
            if c1sq <= 0:
                curve.append((eps, -np.inf, 0.0, float(np.sqrt(max(c2sq, 0)))))
                continue
        curve.append((eps, lam, float(np.sqrt(c1sq)), float(np.sqrt(c2sq))))
    best = max(curve, key=lambda r: r[1])
    return CoercivityCertificate(best[0], best[1], best[2], best[3], curve, info, method)


def _lobpcg_pencil(S, G, Hd, w, tol=1e-8, maxiter=500):
    """Iterative fallback with the constant mode deflated by a large shift."""
    n = len(w)
    u = w / np.linalg.norm(w)
    shift = 10.0 * np.abs(S).sum(axis=1).max()
    P = np.eye(n) - np.outer(u, u)
    A = P @ S @ P + shift * np.outer(u, u)
    B = P @ G @ P + np.outer(u, u)
    Hm = P @ np.diag(Hd) @ P + np.outer(u, u)
    rng = np.random.default_rng(0)
    X = rng.standard_normal((n, 4))
    lam, _ = spla.lobpcg(A, X, B=B, largest=False, tol=tol, maxiter=maxiter)
    ev_lo, _ = spla.lobpcg(B, X, B=Hm, largest=False, tol=tol, maxiter=maxiter)
    ev_hi, _ = spla.lobpcg(B, X, B=Hm, largest=True, tol=tol, maxiter=maxiter)
    return float(lam.min()), float(ev_lo.min()), float(ev_hi.max())


def velocity_gap(grid: PhaseGrid) -> float:
    """Spectral gap of the velocity-only collision matrix (OU gap 1 in the continuum)."""
    from .discretization import collision_velocity_matrix

    C = collision_velocity_matrix(grid).toarray()
    # symmetrise in L^2(mu^-1 w_v)
    s = np.sqrt(grid.wv / grid.mu_h)
    Cs = (s[:, None] * C) / s[None, :]
    ev = np.sort(np.linalg.eigvalsh(0.5 * (Cs + Cs.T)))[::-1]
    return float(-ev[1])
