import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kfplab.errors import KfpError
from kfplab.evolution import Stepper, evolve
from kfplab.functionals import (boundary_penalization, dg_boundary_check, fit_power, fit_rate, gaussian_wall_profile,
                                interpolation_inequality_test, moments, relaxation_distance, time_cutoff,
                                time_cutoff_power_derivative, weighted_lp_norm, zero_flux_residual)
from kfplab.weights import WeightSpec


def test_norms_of_equilibrium(interval_gen):
    g = interval_gen.grid
    assert weighted_lp_norm(g, g.f_inf, None, 1.0) == pytest.approx(1.0)
    assert weighted_lp_norm(g, g.f_inf, None, math.inf) == pytest.approx(g.f_inf.max())
    assert relaxation_distance(g, 3 * g.f_inf, 3.0, WeightSpec.polynomial(3), 2.0) < 1e-14


@settings(max_examples=30, deadline=None)
@given(p=st.sampled_from([1.0, 1.5, 2.0, 4.0]), seed=st.integers(0, 1000))
def test_norm_is_a_norm(interval_gen, p, seed):
    g = interval_gen.grid
    rng = np.random.default_rng(seed)
    f, h = rng.standard_normal(g.size), rng.standard_normal(g.size)
    w = WeightSpec.polynomial(2)
    n = lambda u: weighted_lp_norm(g, u, w, p)  # noqa: E731
    assert n(f + h) <= n(f) + n(h) + 1e-12
    assert n(-2.5 * f) == pytest.approx(2.5 * n(f))


def test_moments_of_equilibrium(interval_gen):
    g = interval_gen.grid
    m = moments(g, g.f_inf)
    np.testing.assert_allclose(m.rho, 1.0 / g.domain.measure)
    np.testing.assert_allclose(m.j, 0.0, atol=1e-15)


def test_zero_flux_and_boundary_jensen(interval_gen):
    g = interval_gen.grid
    f = np.random.default_rng(0).random(g.size)
    assert zero_flux_residual(g, f) < 1e-13
    for p in (1.0, 2.0, 3.0):
        assert dg_boundary_check(g, f, p).holds


def test_fit_rate_and_power_exact():
    t = np.linspace(0, 2, 41)
    fr = fit_rate(t, 3 * np.exp(-1.7 * t), (0.5, 2.0))
    assert fr.slope == pytest.approx(-1.7) and fr.residual < 1e-12
    tp = np.linspace(0.01, 1, 50)
    fp = fit_power(tp, 2 * tp**-2.0)
    assert fp.slope == pytest.approx(-2.0)


def test_fit_needs_points():
    with pytest.raises(KfpError):
        fit_rate(np.arange(5.0), np.ones(5))


def test_time_cutoff_and_derivative():
    w = (0.0, 4.0)
    assert time_cutoff(2.0, w) == 1.0 and time_cutoff(0.0, w) == 0.0
    t = np.linspace(0.2, 3.8, 37)
    h = 1e-6
    q = 0.8
    num = (time_cutoff(t + h, w) ** q - time_cutoff(t - h, w) ** q) / (2 * h)
    np.testing.assert_allclose(time_cutoff_power_derivative(t, w, q), num, atol=1e-5)


def test_boundary_penalization_finite(interval_gen):
    g = interval_gen.grid
    f0 = np.random.default_rng(1).random(g.size)
    tr = evolve(interval_gen, f0, 1.0, Stepper("implicit", 0.01))
    out = boundary_penalization(g, tr, 0.8)
    assert 0 < out["left"] and 0 < out["right"] and math.isfinite(out["ratio_l1"])
    doubled = boundary_penalization(g, tr, 0.8, beta=2 * out["beta"])
    assert doubled["left"] > out["left"]


def test_interpolation_quadrature_matches_monte_carlo():
    prof = gaussian_wall_profile(0.1)
    quad = interpolation_inequality_test(prof, method="quadrature")
    mc = interpolation_inequality_test(prof, method="mc", samples=400_000, seed=3)
    assert mc["ratio"] == pytest.approx(quad["ratio"], rel=0.05)
    assert quad["beta"] == pytest.approx(1 / 8)


def test_interpolation_only_three_dimensions():
    with pytest.raises(KfpError):
        interpolation_inequality_test(gaussian_wall_profile(0.1), d=2)
