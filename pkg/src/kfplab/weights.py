"""Velocity weight functions and the growth function varpi.

The parametric family is

    stretched          <v>^k exp(zeta <v>^s)
    gaussian           exp(zeta |v|^2)
    gaussian-negative  exp(-zeta |v|^2)
    maxwell-power      M^(-1 + 1/p)

with <v> = sqrt(1 + |v|^2) and M the wall Maxwellian.  All members are radial,
so every derivative needed by varpi reduces to the radial log-derivative
coefficient g(r) with grad(log w) = g(r) v.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import KfpError, WeightClassError

FORMS = ("stretched", "gaussian", "gaussian-negative", "maxwell-power")

# class tags
W, W0, W1, W2, W3 = "W", "W0", "W1", "W2", "W3"
N, N0, N1 = "N", "N0", "N1"


def japanese(r):
    return np.sqrt(1.0 + np.asarray(r, dtype=float) ** 2)


def chi(r):
    """C^2 cutoff: 1 on [0, 1], 0 on [2, inf), quintic smoothstep in between."""
    r = np.asarray(r, dtype=float)
    t = np.clip(r - 1.0, 0.0, 1.0)
    return 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


def wall_maxwellian(r, d):
    """M(v) = (2 pi)^(-(d-1)/2) exp(-|v|^2/2), as a function of |v|."""
    r = np.asarray(r, dtype=float)
    return (2 * np.pi) ** (-(d - 1) / 2) * np.exp(-(r**2) / 2)


def maxwellian(r, d):
    """mu(v) = (2 pi)^(-d/2) exp(-|v|^2/2)."""
    r = np.asarray(r, dtype=float)
    return (2 * np.pi) ** (-d / 2) * np.exp(-(r**2) / 2)


def _inv(p):
    return 0.0 if math.isinf(p) else 1.0 / p


@dataclass(frozen=True)
class WeightSpec:
    k: float = 0.0
    zeta: float = 0.0
    s: float = 0.0
    form: str = "stretched"
    p: float | None = None

    def __post_init__(self):
        if self.form not in FORMS:
            raise KfpError(f"unknown weight form {self.form!r}")
        if self.zeta < 0:
            raise KfpError("zeta must be >= 0")
        if not 0 <= self.s <= 2:
            raise KfpError("s must lie in [0, 2]")
        if self.form in ("gaussian", "gaussian-negative") and not self.zeta < 0.5:
            raise KfpError("gaussian weights need zeta < 1/2")
        if self.form == "maxwell-power" and (self.p is None or self.p < 1):
            raise KfpError("maxwell-power weight needs p in [1, inf]")

    # -- shorthands -----------------------------------------------------
    @classmethod
    def polynomial(cls, k):
        return cls(k=k)

    @classmethod
    def gaussian(cls, zeta):
        return cls(zeta=zeta, form="gaussian")

    @classmethod
    def gaussian_negative(cls, zeta):
        return cls(zeta=zeta, form="gaussian-negative")

    @classmethod
    def maxwell_power(cls, p):
        return cls(form="maxwell-power", p=p)

    @property
    def label(self) -> str:
        if self.form == "stretched":
            if self.zeta == 0 or self.s == 0:
                return f"<v>^{self.k:g}"
            return f"<v>^{self.k:g}exp({self.zeta:g}<v>^{self.s:g})"
        if self.form == "gaussian":
            return f"exp({self.zeta:g}|v|^2)"
        if self.form == "gaussian-negative":
            return f"exp(-{self.zeta:g}|v|^2)"
        return f"M^(-1+1/{self.p:g})"

    @property
    def _mexp(self) -> float:
        # exponent a with w = M^a
        return -1.0 + _inv(self.p)

    # -- evaluation -----------------------------------------------------
    def radial(self, r, d=1):
        r = np.asarray(r, dtype=float)
        if self.form == "stretched":
            jv = japanese(r)
            return jv**self.k * np.exp(self.zeta * jv**self.s)
        if self.form == "gaussian":
            return np.exp(self.zeta * r**2)
        if self.form == "gaussian-negative":
            return np.exp(-self.zeta * r**2)
        return wall_maxwellian(r, d) ** self._mexp

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        return self.radial(np.linalg.norm(v, axis=-1), d=v.shape[-1])

    def log_gradient_coefficient(self, r):
        """(g, r g') with grad log w = g(|v|) v."""
        r = np.asarray(r, dtype=float)
        if self.form == "stretched":
            j2 = 1.0 + r**2
            g = self.k / j2 + self.zeta * self.s * j2 ** (self.s / 2 - 1)
            rg = -2 * self.k * r**2 / j2**2 + self.zeta * self.s * (self.s - 2) * r**2 * j2 ** (self.s / 2 - 2)
            return g, rg
        if self.form == "gaussian":
            c = 2 * self.zeta
        elif self.form == "gaussian-negative":
            c = -2 * self.zeta
        else:
            c = -self._mexp
        return np.full_like(r, c), np.zeros_like(r)

    def nondecreasing(self) -> bool:
        if self.form == "stretched":
            return self.k + self.zeta * self.s >= 0
        if self.form == "gaussian-negative":
            return self.zeta == 0
        return True


def varpi(weight: WeightSpec, p: float, v, d: int | None = None):
    """varpi_{w,p}(v) from analytic derivatives.

    ``v`` is an array of velocities with trailing dimension d.  When ``d`` is
    given and the trailing axis does not have length d, ``v`` is read as an
    array of speeds |v|.
    """
    v = np.asarray(v, dtype=float)
    if d is None:
        d = v.shape[-1]
        r = np.linalg.norm(v, axis=-1)
    elif v.ndim == 0 or v.shape[-1] != d:
        r = np.abs(v)
    else:
        r = np.linalg.norm(v, axis=-1)
    ip = _inv(p)
    g, rg = weight.log_gradient_coefficient(r)
    grad2 = g**2 * r**2  # |grad w|^2 / w^2
    lap = d * g + rg + grad2  # Delta w / w
    vgrad = g * r**2  # v . grad w / w
    return 2 * (1 - ip) * grad2 + (2 * ip - 1) * lap + (1 - ip) * d - vgrad


def varpi_limsup(weight: WeightSpec, p: float, d: int) -> float:
    """limsup_{|v| -> inf} varpi_{w,p}(v), from the large-|v| expansion."""
    ip = _inv(p)
    if weight.form == "stretched" and weight.zeta > 0 and weight.s > 0:
        if weight.s < 2:
            return -math.inf
        lead = 4 * weight.zeta**2 - 2 * weight.zeta
        if lead > 0:
            return math.inf
        if lead < 0:
            return -math.inf
        # s = 2, zeta = 1/2: leading |v|^2 terms cancel, evaluate far out
        return float(varpi(weight, p, 1e6, d=d))
    if weight.form == "stretched":
        # polynomial <v>^k (times a constant): varpi -> d/p' - k
        return (1 - ip) * d - weight.k
    c = weight.log_gradient_coefficient(np.array(1.0))[0]
    c = float(c)
    # constant g = c: varpi = (c^2 - c)|v|^2 + (2/p - 1) d c + (1 - 1/p) d
    lead = c**2 - c
    if lead > 0:
        return math.inf
    if lead < 0:
        return -math.inf
    return (2 * ip - 1) * d * c + (1 - ip) * d


def kappa_star(weight: WeightSpec, d: int) -> float:
    """sup over p in [1, inf] of limsup varpi; affine in 1/p so p in {1, inf} suffices."""
    return max(varpi_limsup(weight, 1.0, d), varpi_limsup(weight, math.inf, d))


def kappa_sup(weight: WeightSpec, d: int, vmax: float = 6.0, samples: int = 10_000) -> float:
    """kappa_w = max_{p=1,inf} sup_v varpi_{w,p}; +inf when the weight is not in W."""
    if math.isinf(kappa_star(weight, d)) and kappa_star(weight, d) > 0:
        return math.inf
    rmax = max(50.0, 10.0 * vmax)
    r = np.linspace(0.0, rmax, samples)
    best = -math.inf
    for p in (1.0, math.inf):
        best = max(best, float(np.max(varpi(weight, p, r, d=d))), varpi_limsup(weight, p, d))
    return best


def classify(weight: WeightSpec, d: int) -> set[str]:
    """Every weight class the parametric weight provably belongs to."""
    tags: set[str] = set()
    theta1 = 1.0 / (2 * d + 3)
    form = weight.form
    if form == "stretched":
        polynomial = weight.zeta == 0 or weight.s == 0
        in_w_literal = (0 < weight.s < 2) or (weight.s == 2 and weight.zeta < 0.5) or weight.s == 0 or polynomial
        if in_w_literal and weight.nondecreasing():
            tags.add(W)
        if in_w_literal:
            # omega_0 = omega / <v> has bounded log-gradient times <v>^-1 for s <= 2
            tags.add(W3)
        if W in tags:
            if polynomial:
                w0 = weight.k > d + 1
            else:
                w0 = True
            if w0:
                tags.add(W0)
                if kappa_star(weight, d) < -1:
                    tags.add(W2)
        if weight.s == 2 and weight.k == 0 and (1 - theta1) / 2 < weight.zeta < 0.5:
            tags.add(W1)
        if polynomial and weight.k <= 0:
            # m = <v>^k with k <= 0: m^-1 = <v>^-k is in W
            tags.add(N)
            if -weight.k > d + 1:
                tags.add(N0)
    elif form == "gaussian":
        tags.add(W)
        tags.add(W3)
        if weight.zeta > 0:
            tags.update((W0, W2))
        if (1 - theta1) / 2 < weight.zeta < 0.5:
            tags.add(W1)
    elif form == "gaussian-negative":
        tags.add(N)
        if weight.zeta > 0:
            tags.add(N0)
            tags.add(N1)
    else:
        # M^(-1+1/p) = const * exp((1 - 1/p)|v|^2 / 2), nondecreasing, kappa finite
        tags.add(W)
    return tags


# ---------------------------------------------------------------------------
# moment integrals over R^d

def sphere_moment(a: float, d: int) -> float:
    """int over S^{d-1} of (sigma_1)_+^a."""
    return math.pi ** ((d - 1) / 2) * special.gamma((a + 1) / 2) / special.gamma((a + d) / 2)


def _radial_integral(fn: Callable[[float], float], breaks=()) -> float:
    pts = [0.0] + sorted(b for b in breaks if b > 0) + [math.inf]
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        with np.errstate(over="raise", invalid="raise"), warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, _ = integrate.quad(fn, a, b, limit=200, epsabs=1e-13, epsrel=1e-11)
            except (FloatingPointError, OverflowError, integrate.IntegrationWarning) as exc:
                raise WeightClassError("moment integral overflows or diverges: weight not integrable") from exc
        if not math.isfinite(val):
            raise WeightClassError("moment integral diverges: weight not integrable")
        total += val
    return total


def _as_radial(weight, d):
    if isinstance(weight, WeightSpec):
        return lambda r: float(weight.radial(r, d))
    return weight


def moment_integrals(weight, d: int, q: float | None = None, breaks=()):
    """(K0, K1, K2) for a radial weight.

    K0 = int M (n.v_hat)_+^2 dv, K1 = int M w (n.v)_+ dv and, when q is given,
    K2 = int w^(q/(1-q)) (n.v)_+ dv.  All are independent of the unit normal n.
    """
    w = _as_radial(weight, d)
    a1, a2 = sphere_moment(1, d), sphere_moment(2, d)
    k0 = a2 * _radial_integral(lambda r: float(wall_maxwellian(r, d)) * r**2 / (1 + r**2) * r ** (d - 1), breaks)
    k1 = a1 * _radial_integral(lambda r: float(wall_maxwellian(r, d)) * w(r) * r**d, breaks)
    k2 = None
    if q is not None:
        if not 0 < q < 1:
            raise KfpError("q must lie in (0, 1)")
        e = q / (1 - q)
        k2 = a1 * _radial_integral(lambda r: w(r) ** e * r**d, breaks)
    return k0, k1, k2


def moment_integrals_on_grid(velocities, vweights, wall_maxw, values, normal):
    """Discrete (K0, K1) on a velocity grid for a given boundary normal."""
    velocities = np.asarray(velocities, dtype=float)
    vn = velocities @ np.atleast_1d(normal)
    r2 = np.sum(velocities**2, axis=-1)
    out = vn > 0
    k0 = np.sum((wall_maxw * vn**2 / (1 + r2) * vweights)[out])
    k1 = np.sum((wall_maxw * values * vn * vweights)[out])
    return float(k0), float(k1)


# ---------------------------------------------------------------------------
# twisted weights

VARIANTS = ("forward", "dual", "moment-Lq", "frakM")


@dataclass
class TwistedWeight:
    variant: str
    base: WeightSpec | None
    domain: object
    A: float | None
    q: float | None = None
    c_A: float | None = None
    closure: float | None = None  # value of the closure condition at A
    d: int = 1

    def cut(self, r):
        return chi(np.asarray(r) / self.A)

    def base_part(self, r):
        """omega_A, m_A or m_A^q depending on the variant (velocity only)."""
        r = np.asarray(r, dtype=float)
        d = self.d
        if self.variant == "forward":
            c = self.cut(r)
            return c + (1 - c) * self.base.radial(r, d)
        if self.variant == "dual":
            c = self.cut(r)
            return c * wall_maxwellian(r, d) + (1 - c) * self.base.radial(r, d)
        if self.variant == "moment-Lq":
            c = self.cut(r)
            q = self.q
            return c * wall_maxwellian(r, d) ** (1 - q) + (1 - c) * self.base.radial(r, d) ** q
        return wall_maxwellian(r, d)

    def evaluate(self, x, v):
        """Weight on the phase grid: array of shape (len(x), len(v))."""
        dom = self.domain
        x = np.asarray(x, dtype=float)
        v = np.atleast_2d(np.asarray(v, dtype=float))
        if v.shape[-1] != self.d:
            v = v.reshape(-1, self.d)
        r = np.linalg.norm(v, axis=-1)
        vt = v / (1 + r**2)[:, None]  # v~ = v / <v>^2
        n = np.atleast_2d(dom.normal_field(x).reshape(len(x), -1))
        nvt = n @ vt.T  # (nx, nv)
        base = self.base_part(r)[None, :]
        if self.variant == "forward":
            return base + 0.5 * nvt
        if self.variant == "dual":
            return base - 0.5 * nvt * wall_maxwellian(r, self.d)[None, :]
        delta = np.asarray(dom.signed_distance(x), dtype=float).reshape(-1, 1)
        D = dom.diameter_bound
        if self.variant == "moment-Lq":
            return base * (1 - 0.25 * nvt + 0.25 * np.sqrt(delta / D) * nvt)
        return base * (1 - 0.25 * np.sqrt(delta / D) * nvt)

    def sandwich_bounds(self, r):
        """(lower, upper) = (1/2, 3/2) times the untwisted part."""
        b = self.base_part(r)
        return 0.5 * b, 1.5 * b


def _closure_value(variant, base, A, d, q):
    tw = TwistedWeight(variant, base, None, A, q=q, d=d)
    breaks = (A, 2 * A)
    if variant == "forward":
        k0, k1, _ = moment_integrals(lambda r: float(tw.base_part(r)), d, breaks=breaks)
        return k1 - 1 - 0.5 * k0  # must be <= 0
    if variant == "dual":
        k0, _, _ = moment_integrals(lambda r: 1.0, d)
        k1 = sphere_moment(1, d) * _radial_integral(lambda r: float(tw.base_part(r)) * r**d, breaks)
        return k1 - 1 - 0.5 * k0
    # moment-Lq, condition K0 + K1 - K2^(1-q) >= 0; returned negated so <= 0 is good
    Mq = lambda r: float(wall_maxwellian(r, d)) ** q  # noqa: E731
    mAq = lambda r: float(tw.base_part(r))  # noqa: E731  (this is m_A^q)
    k0 = 0.25 * sphere_moment(2, d) * _radial_integral(lambda r: Mq(r) * mAq(r) * r**2 / (1 + r**2) * r ** (d - 1), breaks)
    k1 = sphere_moment(1, d) * _radial_integral(lambda r: Mq(r) * mAq(r) * r**d, breaks)
    k2 = sphere_moment(1, d) * _radial_integral(lambda r: mAq(r) ** (1 / (1 - q)) * r**d, breaks)
    return -(k0 + k1 - k2 ** (1 - q))


def build_twisted(variant: str, base: WeightSpec | None, domain, A="auto", q: float | None = None) -> TwistedWeight:
    """Twisted weight of the requested variant.

    With ``A="auto"`` the cutoff radius is the smallest power of two for which
    the boundary closure condition of the corresponding moment estimate holds.
    """
    if variant not in VARIANTS:
        raise KfpError(f"unknown twisted-weight variant {variant!r}")
    d = domain.dim
    if variant == "frakM":
        return TwistedWeight(variant, None, domain, None, d=d, c_A=1.0)
    tags = classify(base, d)
    if variant == "forward" and W not in tags:
        raise WeightClassError(f"{base.label} is not in W")
    if variant == "dual" and N not in tags:
        raise WeightClassError(f"{base.label} is not in N")
    if variant == "moment-Lq":
        if q is None or not 0 < q < 1:
            raise KfpError("moment-Lq variant needs q in (0, 1)")
        e = q / (1 - q)
        try:
            moment_integrals(lambda r: float(base.radial(r, d)) ** e, d)
        except (WeightClassError, OverflowError) as exc:
            raise WeightClassError("m^(q/(1-q)) |v| is not integrable") from exc

    if A == "auto":
        for j in range(17):
            cand = float(2**j)
            val = _closure_value(variant, base, cand, d, q)
            if val <= 0:
                A, closure = cand, val
                break
        else:
            raise WeightClassError("no cutoff A <= 2^16 satisfies the boundary closure condition")
    else:
        A = float(A)
        closure = _closure_value(variant, base, A, d, q)
    tw = TwistedWeight(variant, base, domain, A, q=q, closure=closure, d=d)
    r = np.linspace(0, 2 * A, 4001)
    if variant == "forward":
        tw.c_A = float(2 * np.max(base.radial(r, d) / tw.base_part(r)))
    elif variant == "dual":
        tw.c_A = float(2 * np.max(base.radial(r, d) / tw.base_part(r)))
    else:
        tw.c_A = float(2 * np.max(base.radial(r, d) ** q / tw.base_part(r)))
    return tw


# ---------------------------------------------------------------------------
# exponents of the ultracontractivity argument

@dataclass(frozen=True)
class UltracontractiveExponents:
    d: int
    q: float
    p: float
    beta: float = field(init=False)
    theta1: float = field(init=False)
    r: float = field(init=False)
    eta: float = field(init=False)
    nu1: float = field(init=False)
    nu2: float = field(init=False)
    nu: float = field(init=False)

    def __post_init__(self):
        d, q, p = self.d, self.q, self.p
        if not (d + 1) / (d + 2) < q < 1:
            raise KfpError(f"q must lie in ((d+1)/(d+2), 1) = ({(d + 1) / (d + 2):.4g}, 1)")
        if not 1 < p < 1 + 1 / (2 * d):
            raise KfpError(f"p must lie in (1, 1 + 1/(2d)) = (1, {1 + 1 / (2 * d):.4g})")
        theta1 = 1.0 / (2 * d + 3)
        inv_r = (1 - theta1) / q + theta1 / p
        r = 1.0 / inv_r
        if not r > 1:
            raise KfpError(f"q = {q} too small: interpolated exponent r = {r:.4g} <= 1")
        eta = (1 - theta1) * (1 / q - 1) + theta1 * (1 / p + 2 * d * (1 - 1 / p))
        nu1 = 1 / r - eta - 1 / q
        set_ = object.__setattr__
        set_(self, "beta", 1.0 / (2 * (d + 1)))
        set_(self, "theta1", theta1)
        set_(self, "r", r)
        set_(self, "eta", eta)
        set_(self, "nu1", nu1)
        set_(self, "nu2", nu1)
        set_(self, "nu", max(nu1, nu1) / (1 - 1 / r))

    @staticmethod
    def min_q(d: int, p: float) -> float:
        """Smallest q giving r > 1 (the bound (d+1)/(d+2) may be larger)."""
        theta1 = 1.0 / (2 * d + 3)
        # (1 - theta1)/q + theta1/p < 1
        return max((d + 1) / (d + 2), (1 - theta1) / (1 - theta1 / p))


def w1_interval(d: int) -> tuple[float, float]:
    """Admissible zeta' range for exp(zeta'|v|^2) in W1."""
    theta1 = 1.0 / (2 * d + 3)
    return (1 - theta1) / 2, 0.5


def smoothing_exponents(d: int, zeta_prime: float, zeta: float) -> dict:
    """Intermediate Gaussian rates of the smoothing argument.

    Requires zeta' in (theta1 zeta + (1-theta1)/2, 1/2); returns the final
    rate zeta'' = min(theta1 zeta', zeta) of the target weight.
    """
    theta1 = 1.0 / (2 * d + 3)
    lo = theta1 * zeta + (1 - theta1) / 2
    if not (lo < zeta_prime < 0.5 and 0 < zeta < 0.5):
        raise KfpError(f"need zeta' in ({lo:.4g}, 1/2) and zeta in (0, 1/2)")
    return {"theta1": theta1, "zeta": zeta, "zeta_prime": zeta_prime, "zeta_second": min(theta1 * zeta_prime, zeta), "lower": lo}


# ---------------------------------------------------------------------------
# splitting amplitude and radius


@dataclass(frozen=True)
class SplitParameters:
    M: float
    R: float
    kappa_star: float
    kappa: float
    target: float  # (kappa_star + kappa) / 2


def split_parameters(weight: WeightSpec, d: int, margin: float = 0.1, samples: int = 20_000) -> SplitParameters:
    """(M, R) with sup_p sup_v (varpi_{w,p} - M chi_R) <= (kappa* + kappa)/2, kappa = kappa*/2.

    R is the smallest power of two past which varpi already lies below the
    target; M then lifts the bounded region.
    """
    ks = kappa_star(weight, d)
    if not ks < -1:
        raise WeightClassError(f"{weight.label} is not in W2 (kappa* = {ks:g})")
    kappa = ks / 2 if math.isfinite(ks) else -2.0
    target = (ks + kappa) / 2 if math.isfinite(ks) else -2.0
    R = None
    for j in range(17):
        cand = float(2**j)
        r = np.linspace(cand, max(50.0, 20 * cand), samples)
        worst = max(float(np.max(varpi(weight, p, r, d=d))) for p in (1.0, math.inf))
        if worst <= target:
            R = cand
            break
    if R is None:
        raise WeightClassError("no radius R <= 2^16 brings varpi below the target")
    r = np.linspace(0.0, R, samples)
    inner = max(float(np.max(varpi(weight, p, r, d=d))) for p in (1.0, math.inf))
    M = max(inner - target, 0.0) + margin
    return SplitParameters(M, R, ks, kappa, target)
