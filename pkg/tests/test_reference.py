import numpy as np
import pytest

from kfplab.discretization import build_grid
from kfplab.errors import KfpError
from kfplab.geometry import Domain
from kfplab.reference import (GaussianState, KolmogorovKernelParams, density_mass, density_sup, fit_envelope,
                              interior_compare, lyapunov_rk4, mehler_density, mehler_propagate,
                              point_mass_covariance, project_to_grid)


@pytest.mark.parametrize("t", [1e-4, 0.05, 0.7, 3.0])
def test_covariance_matches_lyapunov(t):
    cov0 = np.array([[0.04, 0.01], [0.01, 0.25]])
    state = mehler_propagate(GaussianState(np.zeros(2), cov0), t)
    np.testing.assert_allclose(state.cov, lyapunov_rk4(cov0, t), rtol=1e-8, atol=1e-14)


def test_series_branch_is_continuous():
    a = point_mass_covariance(1e-3 * (1 - 1e-9), 1)[0, 0]
    b = point_mass_covariance(1e-3 * (1 + 1e-9), 1)[0, 0]
    assert a == pytest.approx(b, rel=1e-6)


def test_long_time_limits():
    st = mehler_propagate(GaussianState.isotropic([0.3], [2.0], 0.1, 0.3), 40.0)
    assert st.cov[1, 1] == pytest.approx(1.0) and st.mean[1] == pytest.approx(0.0, abs=1e-15)
    assert st.mean[0] == pytest.approx(2.3)


def test_density_normalised_and_sup():
    st = mehler_propagate(GaussianState.isotropic([0.0], [0.5], 0.2, 0.4), 0.3)
    assert density_mass(st) == pytest.approx(1.0, abs=1e-8)
    assert density_sup(st) == pytest.approx(float(mehler_density(st, st.mean[:1], st.mean[1:])))


def test_point_mass_sup_scaling():
    # sup of the point-mass kernel behaves like t^-2 for small t in 1-D
    ts = np.array([1e-3, 2e-3])
    sups = [density_sup(mehler_propagate(GaussianState.point_mass([0.0], [0.0]), t)) for t in ts]
    assert np.log(sups[1] / sups[0]) / np.log(2) == pytest.approx(-2.0, abs=0.01)


def test_envelope_dominates():
    xs = np.linspace(-0.3, 0.3, 41)[:, None, None]
    vs = np.linspace(-3, 3, 41)[None, :, None]
    C1 = fit_envelope([0.01, 0.05, 0.1], xs, vs, C2=0.2)
    assert np.isfinite(C1) and C1 > 0
    # a sharper envelope needs a larger prefactor
    assert fit_envelope([0.01, 0.05, 0.1], xs, vs, C2=0.5) >= C1
    with pytest.raises(KfpError):
        KolmogorovKernelParams(0.0, 1.0, 1.0)


def test_interior_compare_at_time_zero():
    g = build_grid(Domain("interval", 2.0), 64, 64)
    st = GaussianState.isotropic([1.0], [0.0], 0.1, 0.5)
    f = project_to_grid(st, g)
    out = interior_compare(g, f, st, 0.0)
    assert out["l1_error"] < 1e-14 and out["reference_mass"] == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(KfpError):
        interior_compare(g, f, GaussianState.isotropic([0.05], [0.0], 0.1, 0.5), 0.0)
