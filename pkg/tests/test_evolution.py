import numpy as np
import pytest
import scipy.linalg

from kfplab.discretization import assemble_dual, split_generator
from kfplab.errors import CFLViolation, KfpError, NumericalAbort
from kfplab.evolution import Propagator, Stepper, decay_rate_of_B, duhamel_reconstruct, evolve, evolve_dual, pairing
from kfplab.weights import WeightSpec

SCHEMES = ["imex", "implicit", "expm", "expm-action"]


@pytest.mark.parametrize("scheme", SCHEMES)
def test_mass_and_positivity(interval_gen, scheme):
    rng = np.random.default_rng(2)
    f0 = rng.random(interval_gen.size)
    tr = evolve(interval_gen, f0, 0.5, Stepper(scheme, 0.5 * interval_gen.cfl_limit()))
    assert np.max(np.abs(tr.mass / tr.mass[0] - 1)) < 1e-12
    assert tr.column("min").min() >= -1e-14
    assert tr.times[-1] == pytest.approx(0.5)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_duality_identity(interval_gen, scheme):
    dual = assemble_dual(interval_gen)
    st = Stepper(scheme, 0.5 * interval_gen.cfl_limit())
    rng = np.random.default_rng(3)
    f0, gT = rng.random(interval_gen.size), rng.standard_normal(interval_gen.size)
    fT = evolve(interval_gen, f0, 0.3, st).final
    g0 = evolve_dual(dual, gT, 0.3, st).final
    assert abs(pairing(interval_gen.grid, fT, gT) - pairing(interval_gen.grid, f0, g0)) < 1e-12


def test_adjoint_step(interval_gen):
    prop = Propagator(interval_gen, Stepper("imex", 0.5 * interval_gen.cfl_limit()))
    rng = np.random.default_rng(4)
    f, g = rng.random(interval_gen.size), rng.random(interval_gen.size)
    grid = interval_gen.grid
    assert pairing(grid, prop.step(f), g) == pytest.approx(pairing(grid, f, prop.adjoint_step(g)), rel=1e-12)


def test_exponential_schemes_agree_with_dense(interval_gen):
    rng = np.random.default_rng(5)
    f0 = rng.random(interval_gen.size)
    exact = scipy.linalg.expm(0.2 * interval_gen.matrix.toarray()) @ f0
    for scheme in ("expm", "expm-action"):
        out = evolve(interval_gen, f0, 0.2, Stepper(scheme, 0.05)).final
        np.testing.assert_allclose(out, exact, rtol=1e-10, atol=1e-12)


def test_imex_first_order_convergence(interval_gen):
    rng = np.random.default_rng(6)
    f0 = rng.random(interval_gen.size)
    exact = scipy.linalg.expm(0.2 * interval_gen.matrix.toarray()) @ f0
    dt0 = interval_gen.cfl_limit()
    e1 = np.abs(evolve(interval_gen, f0, 0.2, Stepper("imex", dt0)).final - exact).max()
    e2 = np.abs(evolve(interval_gen, f0, 0.2, Stepper("imex", dt0 / 2)).final - exact).max()
    assert 1.6 < e1 / e2 < 2.4


def test_cfl_violation(interval_gen):
    with pytest.raises(CFLViolation):
        evolve(interval_gen, interval_gen.grid.f_inf, 0.1, Stepper("imex", 2 * interval_gen.cfl_limit()))


def test_numerical_abort_on_nan(interval_gen):
    f0 = interval_gen.grid.f_inf.copy()
    f0[0] = np.nan
    with pytest.raises(NumericalAbort):
        evolve(interval_gen, f0, 0.1, Stepper("implicit", 0.01))


def test_bad_stepper():
    with pytest.raises(KfpError):
        Stepper("rk4", 0.1)
    with pytest.raises(KfpError):
        Stepper("imex", 0.0)


def test_evolve_dual_requires_dual(interval_gen):
    with pytest.raises(KfpError):
        evolve_dual(interval_gen, interval_gen.grid.f_inf, 0.1)


def test_absorbed_semigroup_decays(interval_gen):
    A, B = split_generator(interval_gen, 4.0, 2.0)
    rate, fits = decay_rate_of_B(B, WeightSpec.polynomial(3), 1.0, 1.0, Stepper("implicit", 0.01), samples=2)
    assert rate < 0 and len(fits) == 2


@pytest.mark.parametrize("n", [0, 1, 2])
def test_duhamel_representation(specular_gen, n):
    A, _ = split_generator(specular_gen, 3.0, 2.0)
    rng = np.random.default_rng(7)
    f0 = rng.random(specular_gen.size)
    coarse = duhamel_reconstruct(specular_gen, A, f0, 0.5, n, dt=2e-3, points=3)["max_discrepancy"]
    fine = duhamel_reconstruct(specular_gen, A, f0, 0.5, n, dt=1e-3, points=3)["max_discrepancy"]
    # trapezoid quadrature error: second order in dt
    assert fine < 1e-5 and 3.5 < coarse / fine < 4.5
