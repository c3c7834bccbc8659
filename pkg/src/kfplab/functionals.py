"""Measurement layer: weighted norms, moments, boundary functionals and fits."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .discretization import PhaseGrid, TraceField, boundary_mass_flux, traces
from .errors import KfpError
from .weights import TwistedWeight, WeightSpec, chi, japanese, varpi


# ---------------------------------------------------------------------------
# norms


def weight_on_grid(grid: PhaseGrid, weight) -> np.ndarray:
    """Weight values as a flat phase-space array."""
    if weight is None:
        return np.ones(grid.size)
    if isinstance(weight, WeightSpec):
        return np.tile(weight.radial(grid.speed, grid.dim), grid.ncx)
    if isinstance(weight, TwistedWeight):
        return weight.evaluate(grid.x, grid.v).reshape(-1)
    if callable(weight):
        return grid.field_from(weight)
    w = np.asarray(weight, dtype=float)
    if w.size == grid.nvel:
        return np.tile(w.ravel(), grid.ncx)
    if w.size == grid.size:
        return w.ravel()
    raise KfpError(f"weight array of size {w.size} does not match the grid")


def weighted_lp_norm(grid: PhaseGrid, f, weight=None, p: float = 1.0) -> float:
    """||f w||_{L^p} by cell quadrature; p = inf is the grid max."""
    g = np.abs(np.ravel(f)) * weight_on_grid(grid, weight)
    if math.isinf(p):
        return float(g.max())
    return float(np.sum(grid.weights * g**p) ** (1.0 / p))


def dg_weight(p: float) -> WeightSpec:
    """The self-dual weight M^(-1 + 1/p) of the boundary contraction."""
    return WeightSpec.maxwell_power(p)


# ---------------------------------------------------------------------------
# moments and fluxes


@dataclass(frozen=True)
class Moments:
    rho: np.ndarray  # (ncx,)
    j: np.ndarray  # (ncx, d)


def moments(grid: PhaseGrid, f) -> Moments:
    F = grid.as_field(f)
    rho = F @ grid.wv
    j = F @ (grid.wv[:, None] * grid.v)
    return Moments(rho, j)


def zero_flux_residual(grid: PhaseGrid, f) -> float:
    """max over boundary cells of |sum_v gamma f (n.v) w_v| with the reflected incoming trace."""
    return float(np.max(np.abs(boundary_mass_flux(grid, f))))


@dataclass(frozen=True)
class DGReport:
    left: np.ndarray
    right: np.ndarray
    holds: bool


def dg_boundary_check(grid: PhaseGrid, trace, p: float) -> DGReport:
    """Boundary Jensen inequality (sum gamma_+ f (n.v) w)^p <= sum (gamma_+ f / M)^p M (n.v) w.

    ``trace`` is an outgoing TraceField, a list of them, or a Field (whose
    outgoing traces are then taken at every boundary cell).
    """
    if isinstance(trace, TraceField):
        tr = [trace]
    elif isinstance(trace, (list, tuple)) and trace and isinstance(trace[0], TraceField):
        tr = list(trace)
    else:
        tr = [pm[0] for pm in traces(grid, trace)]
    left, right = [], []
    for t in tr:
        if t.sign != "+":
            raise KfpError("boundary check expects outgoing traces")
        if np.any(t.values < 0):
            raise KfpError("trace must be nonnegative")
        Mw = grid.wall_h[t.velocities]
        flux = t.vn * t.wv
        left.append(np.sum(t.values * flux) ** p)
        right.append(np.sum((t.values / Mw) ** p * Mw * flux))
    left, right = np.array(left), np.array(right)
    return DGReport(left, right, bool(np.all(left <= right * (1 + 1e-10))))


# ---------------------------------------------------------------------------
# boundary penalisation


def time_cutoff(t, window):
    """phi(t): quintic bump equal to 1 on the middle half of the window, 0 outside it."""
    a, b = window
    c, h = 0.5 * (a + b), 0.5 * (b - a)
    return chi(2 * np.abs(np.asarray(t, dtype=float) - c) / h)


def time_cutoff_power_derivative(t, window, q):
    """d/dt phi^q computed analytically."""
    a, b = window
    c, h = 0.5 * (a + b), 0.5 * (b - a)
    t = np.asarray(t, dtype=float)
    r = 2 * np.abs(t - c) / h
    s = np.clip(r - 1.0, 0.0, 1.0)
    dchi = -30 * s**2 * (1 - s) ** 2  # chi'(r)
    drdt = 2 * np.sign(t - c) / h
    phi = chi(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(phi > 0, q * phi ** (q - 1) * dchi * drdt, 0.0)
    return out


def _trapz(y, t):
    return float(integrate.trapezoid(y, t))


def boundary_penalization(grid: PhaseGrid, traj, q: float, m: WeightSpec | None = None, window=None,
                          beta: float | None = None) -> dict:
    """Both sides of the boundary-penalised L^q moment estimates.

    General form, with varpi = varpi_{1/m, q}:
        left  = int f^q delta^-beta m^q <v>^-2 phi^q
        right = int f^q m^q (|d_t phi^q| + <varpi_->) phi^q ...
    and the L^1 - L^q form (m = <v>^{-(d+2)(1-q)}):
        right_l1 = T^(1-q) ||phi^q||_{W^1,inf} ||f||_{L^1}^q.
    Integrals run over the trajectory snapshots in time (trapezoid rule).
    """
    if not 0 < q < 1:
        raise KfpError("q must lie in (0, 1)")
    d = grid.dim
    beta = 1.0 / (2 * (d + 1)) if beta is None else beta
    if m is None:
        m = WeightSpec.polynomial(-(d + 2) * (1 - q))
    t = np.asarray(traj.snap_times)
    T = float(t.max())
    window = window or (0.0, T)
    phi_q = time_cutoff(t, window) ** q
    dphi_q = np.abs(time_cutoff_power_derivative(t, window, q))
    sp_ = grid.speed
    mq = m.radial(sp_, d) ** q
    delta = np.asarray(grid.domain.signed_distance(grid.x), dtype=float).reshape(-1)
    if np.any(delta <= 0):
        raise KfpError("cell centres must lie inside the domain")
    inv_m = _reciprocal(m)
    vp = varpi(inv_m, q, sp_, d=d)
    vminus = np.sqrt(1 + np.maximum(-vp, 0.0) ** 2)
    pen = np.outer(delta ** (-beta), mq / japanese(sp_) ** 2).ravel()
    base = np.tile(mq, grid.ncx)
    W = grid.weights
    left_t, r1_t, r2_t, mass_t = [], [], [], []
    for f in traj.snapshots:
        fq = np.maximum(f, 0.0) ** q
        left_t.append(np.sum(W * fq * pen))
        r1_t.append(np.sum(W * fq * base))
        r2_t.append(np.sum(W * fq * np.tile(mq * vminus, grid.ncx)))
        mass_t.append(np.sum(W * np.abs(f)))
    left = _trapz(np.array(left_t) * phi_q, t)
    right = _trapz(np.array(r1_t) * dphi_q + np.array(r2_t) * phi_q, t)
    l1 = _trapz(np.array(mass_t), t)
    w1inf = float(np.max(phi_q) + np.max(dphi_q))
    right_l1 = T ** (1 - q) * w1inf * l1**q
    return {
        "q": q,
        "beta": beta,
        "left": left,
        "right": right,
        "ratio": left / right if right > 0 else (0.0 if left == 0 else math.inf),
        "right_l1": right_l1,
        "ratio_l1": left / right_l1 if right_l1 > 0 else (0.0 if left == 0 else math.inf),
    }


def _reciprocal(m: WeightSpec) -> WeightSpec:
    if m.form == "stretched" and (m.zeta == 0 or m.s == 0):
        return WeightSpec.polynomial(-m.k)
    if m.form == "gaussian-negative":
        return WeightSpec.gaussian(m.zeta)
    if m.form == "gaussian":
        return WeightSpec.gaussian_negative(m.zeta)
    raise KfpError(f"no closed-form reciprocal for {m.label}")


# ---------------------------------------------------------------------------
# interpolation inequality in the unit ball of R^3


@dataclass(frozen=True)
class SeparableProfile:
    """g(x, v) = G(|v|) b(delta(x)) on the unit ball times R^3."""

    G: Callable
    dG: Callable
    b: Callable


def gaussian_wall_profile(ell: float, scale: float = 1.0, delta0: float = 0.0) -> SeparableProfile:
    """exp(-|v|^2) times exp(-delta/ell), optionally switched off for delta < delta0."""
    def b(dl):
        dl = np.asarray(dl, dtype=float)
        return scale * np.exp(-dl / ell) * (dl >= delta0)

    return SeparableProfile(lambda r: np.exp(-np.asarray(r) ** 2), lambda r: -2 * np.asarray(r) * np.exp(-np.asarray(r) ** 2), b)


def _interp_parts_quadrature(profile: SeparableProfile, beta: float):
    vol = lambda dl: 4 * np.pi * (1 - dl) ** 2  # noqa: E731
    G, dG, b = profile.G, profile.dG, profile.b
    sph = 4 * np.pi
    v0 = sph * integrate.quad(lambda r: G(r) ** 2 * r**2, 0, np.inf, epsabs=1e-14)[0]
    v1 = sph * integrate.quad(lambda r: G(r) ** 2 * (1 + r * r) * r**2, 0, np.inf, epsabs=1e-14)[0]
    gradsq = lambda r: (dG(r) * np.sqrt(1 + r * r) + G(r) * r / np.sqrt(1 + r * r)) ** 2  # noqa: E731
    v2 = sph * integrate.quad(lambda r: gradsq(r) * r**2, 0, np.inf, epsabs=1e-14)[0]
    opts = dict(limit=400, epsabs=1e-14, epsrel=1e-12)
    x0 = integrate.quad(lambda dl: b(dl) ** 2 * dl ** (-beta) * vol(dl), 0, 1, **opts)[0]
    x1 = integrate.quad(lambda dl: b(dl) ** 2 * dl ** (-0.5) * vol(dl), 0, 1, **opts)[0]
    x2 = integrate.quad(lambda dl: b(dl) ** 2 * vol(dl), 0, 1, **opts)[0]
    left = v0 * x0
    right = v1 * x1 / 3.0 + v2 * x2
    return left, right


def _interp_parts_mc(profile: SeparableProfile, beta: float, samples: int, seed: int, batch: int = 1_000_000):
    rng = np.random.default_rng(seed)
    G, dG, b = profile.G, profile.dG, profile.b
    left = right = 0.0
    done = 0
    while done < samples:
        n = min(batch, samples - done)
        # delta with density 1/(2 sqrt(delta)) on (0, 1); direction uniform
        dl = rng.random(n) ** 2
        wx = 4 * np.pi * (1 - dl) ** 2 * 2 * np.sqrt(dl)
        nrm = rng.standard_normal((n, 3))
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        v = rng.standard_normal((n, 3)) * np.sqrt(0.5)
        r = np.linalg.norm(v, axis=1)
        wv = np.pi**1.5 * np.exp(r**2)  # 1 / N(0, I/2) density
        jv = np.sqrt(1 + r * r)
        g = G(r) * b(dl)
        cos2 = (np.sum(nrm * v, axis=1) / r) ** 2
        grad = (dG(r) * jv + G(r) * r / jv) * b(dl)
        w = wx * wv
        left += np.sum(w * g**2 * dl ** (-beta))
        right += np.sum(w * ((g * jv) ** 2 * cos2 / np.sqrt(dl) + grad**2))
        done += n
    return left / samples, right / samples


def interpolation_inequality_test(profile: SeparableProfile, d: int = 3, method: str = "mc",
                                  samples: int = 10_000_000, seed: int = 0) -> dict:
    """Right/left ratio of the weighted interpolation inequality with beta = 1/(2(d+1))."""
    if d != 3:
        raise KfpError("the interpolation test is implemented for d = 3 only")
    beta = 1.0 / (2 * (d + 1))
    if method == "mc":
        left, right = _interp_parts_mc(profile, beta, samples, seed)
    elif method == "quadrature":
        left, right = _interp_parts_quadrature(profile, beta)
    else:
        raise KfpError(f"unknown method {method!r}")
    return {"left": left, "right": right, "ratio": right / left, "beta": beta, "method": method}


# ---------------------------------------------------------------------------
# fits


@dataclass(frozen=True)
class RateFit:
    window: tuple
    slope: float
    intercept: float
    residual: float
    points: int


def _lsq(x, y, window, tvals):
    t1, t2 = window
    if not t1 < t2:
        raise KfpError("fit window needs t1 < t2")
    sel = (tvals >= t1 - 1e-12) & (tvals <= t2 + 1e-12)
    if sel.sum() < 8:
        raise KfpError(f"fit window [{t1}, {t2}] holds {sel.sum()} points, need >= 8")
    if np.any(y[sel] <= 0):
        raise KfpError("non-positive value in fit window")
    X = x[sel]
    Y = np.log(y[sel])
    A = np.vstack([X, np.ones_like(X)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, Y, rcond=None)
    res = float(np.sqrt(np.mean((A @ [slope, icpt] - Y) ** 2)))
    return RateFit((float(t1), float(t2)), float(slope), float(icpt), res, int(sel.sum()))


def fit_rate(t, values, window=None) -> RateFit:
    """Least squares of log(value) against t."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    window = window or (t.min(), t.max())
    return _lsq(t, y, window, t)


def fit_power(t, values, window=None) -> RateFit:
    """Least squares of log(value) against log(t)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    window = window or (t[t > 0].min(), t.max())
    if window[0] <= 0:
        raise KfpError("power fit needs t > 0")
    with np.errstate(divide="ignore"):
        lt = np.log(np.where(t > 0, t, np.nan))
    return _lsq(np.nan_to_num(lt, nan=-np.inf), y, window, t)


def relaxation_distance(grid: PhaseGrid, f, mass: float, weight=None, p: float = 1.0) -> float:
    """||f - mass f_inf||_{L^p_w}."""
    return weighted_lp_norm(grid, np.ravel(f) - mass * grid.f_inf, weight, p)
