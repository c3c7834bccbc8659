import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import erfc

from kfplab.errors import KfpError, WeightClassError
from kfplab.geometry import Domain
from kfplab.weights import (UltracontractiveExponents, WeightSpec, build_twisted, chi, classify, kappa_star, kappa_sup,
                            moment_integrals, smoothing_exponents, split_parameters, varpi, w1_interval)

# K0 in d = 1: int_0^inf e^{-v^2/2} v^2/(1+v^2) dv in closed form
K0_D1 = math.sqrt(math.pi / 2) - math.pi / 2 * math.exp(0.5) * erfc(1 / math.sqrt(2))


def varpi_fd(w, p, r, d, h=1e-4):
    """varpi from finite differences of the radial profile (independent of the analytic path)."""
    ip = 0.0 if math.isinf(p) else 1 / p
    f = lambda s: float(w.radial(s, d))  # noqa: E731
    w0 = f(r)
    w1 = (f(r + h) - f(r - h)) / (2 * h)
    w2 = (f(r + h) - 2 * w0 + f(r - h)) / h**2
    lap = w2 + (d - 1) / r * w1
    return 2 * (1 - ip) * (w1 / w0) ** 2 + (2 * ip - 1) * lap / w0 + (1 - ip) * d - r * w1 / w0


def test_chi_profile():
    r = np.linspace(0, 3, 301)
    c = chi(r)
    assert np.all(c[r <= 1] == 1) and np.all(c[r >= 2] == 0)
    assert np.all(np.diff(c) <= 1e-15)


def test_varpi_frozen_values():
    assert varpi(WeightSpec.gaussian(0.25), 2.0, 0.0, d=1) == pytest.approx(0.5)
    assert varpi(WeightSpec.polynomial(3), 2.0, 0.0, d=1) == pytest.approx(0.5)
    # inverse wall Maxwellian: varpi = d / p exactly, for every v
    v = np.linspace(0, 5, 11)
    np.testing.assert_allclose(varpi(WeightSpec.maxwell_power(math.inf), 1.0, v, d=3), 3.0, rtol=1e-12)


def test_varpi_vector_and_speed_inputs_agree():
    w = WeightSpec.polynomial(4)
    v = np.array([[0.3, 0.4, 1.2], [2.0, 0.0, 0.0]])
    np.testing.assert_allclose(varpi(w, 2.0, v), varpi(w, 2.0, np.linalg.norm(v, axis=1), d=3))


@settings(max_examples=40, deadline=None)
@given(k=st.floats(0, 6), zeta=st.floats(0, 0.45), s=st.sampled_from([0.5, 1.0, 2.0]),
       p=st.sampled_from([1.0, 2.0, 4.0, math.inf]), d=st.integers(1, 3), r=st.floats(0.3, 4.0))
def test_varpi_matches_finite_differences(k, zeta, s, p, d, r):
    w = WeightSpec(k=k, zeta=zeta, s=s)
    assert float(varpi(w, p, r, d=d)) == pytest.approx(varpi_fd(w, p, r, d), rel=1e-5, abs=1e-5)


@pytest.mark.parametrize("k,d,p", [(5, 3, 1.0), (5, 3, math.inf), (3, 1, 2.0)])
def test_kappa_star_polynomial(k, d, p):
    ip = 0 if math.isinf(p) else 1 / p
    w = WeightSpec.polynomial(k)
    assert kappa_star(w, d) == pytest.approx(d - k)  # max over p at p = inf
    assert float(varpi(w, p, 1e5, d=d)) == pytest.approx((1 - ip) * d - k, abs=1e-6)


def test_kappa_sup_frozen():
    assert kappa_sup(WeightSpec(k=0, zeta=1, s=1), 1) == pytest.approx(1.0)
    assert kappa_sup(WeightSpec(k=0, zeta=0.6, s=2), 1) == math.inf


@pytest.mark.parametrize("weight,d,expected", [
    (WeightSpec.polynomial(5), 3, {"W", "W0", "W2", "W3"}),
    (WeightSpec.polynomial(1), 3, {"W", "W3"}),
    (WeightSpec.gaussian(0.2), 3, {"W", "W0", "W2", "W3"}),
    (WeightSpec.gaussian(0.45), 3, {"W", "W0", "W1", "W2", "W3"}),
    (WeightSpec.gaussian_negative(0.25), 3, {"N", "N0", "N1"}),
])
def test_classify(weight, d, expected):
    assert classify(weight, d) == expected


def test_classify_poly_d_plus_2_contains_w2():
    assert {"W", "W0", "W2"} <= classify(WeightSpec.polynomial(5), 3)


def test_w1_interval_d3():
    lo, hi = w1_interval(3)
    assert lo == pytest.approx(4 / 9) and hi == 0.5


def test_moment_integrals_oracles():
    k0, k1, _ = moment_integrals(WeightSpec.polynomial(3), 1)
    assert k0 == pytest.approx(K0_D1, rel=1e-12)
    for d in (1, 2, 3):
        # the wall Maxwellian has unit outgoing flux
        assert moment_integrals(lambda r: 1.0, d)[1] == pytest.approx(1.0, rel=1e-10)


def test_moment_integrals_reject_non_integrable():
    with pytest.raises(WeightClassError):
        moment_integrals(WeightSpec(k=0, zeta=0.6, s=2), 1)


def test_forward_twisted_weight_closure_and_sandwich():
    tw = build_twisted("forward", WeightSpec.polynomial(3), Domain("interval", 1.0))
    assert tw.closure <= 0
    x = np.linspace(0.05, 0.95, 7)
    v = np.linspace(-5, 5, 11)
    W = tw.evaluate(x, v)
    lo, hi = tw.sandwich_bounds(np.abs(v))
    assert np.all(W >= lo[None, :] - 1e-12) and np.all(W <= hi[None, :] + 1e-12)


def test_dual_twisted_requires_class_n():
    with pytest.raises(WeightClassError):
        build_twisted("dual", WeightSpec.polynomial(3), Domain("interval", 1.0))


def test_ultracontractive_exponents_constraints():
    e = UltracontractiveExponents(1, 0.97, 1.2)
    assert e.beta == pytest.approx(0.25) and e.r > 1
    assert UltracontractiveExponents.min_q(1, 1.2) == pytest.approx(0.96)
    with pytest.raises(KfpError):
        UltracontractiveExponents(1, 0.8, 1.2)
    with pytest.raises(KfpError):
        smoothing_exponents(3, 0.3, 0.1)


def test_split_parameters_bound():
    w = WeightSpec.polynomial(3)
    sp_ = split_parameters(w, 1)
    r = np.linspace(0, 60, 20001)
    for p in (1.0, 2.0, math.inf):
        assert np.max(varpi(w, p, r, d=1) - sp_.M * chi(r / sp_.R)) <= sp_.target
    with pytest.raises(WeightClassError):
        split_parameters(WeightSpec.polynomial(1), 1)
