import numpy as np
import pytest
from scipy.special import j0, jn_zeros

from kfplab.discretization import assemble_generator, build_grid
from kfplab.errors import KfpError
from kfplab.geometry import Domain
from kfplab.hypocoercivity import (TwistedProduct, boundary_defect, coercivity_certificate, dirichlet_form,
                                   h_product, macro_decompose, poisson_neumann, velocity_gap)


def poisson_error_1d(nx):
    g = build_grid(Domain("interval", 1.0), nx, 4)
    rho = np.pi**2 * np.cos(np.pi * g.x)
    sol = poisson_neumann(g, rho - g.wx @ rho / g.wx.sum())
    exact = np.cos(np.pi * g.x)
    exact -= g.wx @ exact / g.wx.sum()
    return np.max(np.abs(sol.u - exact)), sol


def test_poisson_1d_second_order():
    e1, sol = poisson_error_1d(16)
    e2, _ = poisson_error_1d(32)
    assert e1 < 5e-3 and 3.5 < e1 / e2 < 4.5
    np.testing.assert_allclose(sol.boundary_flux, 0, atol=1e-12)


def poisson_error_disk(nr):
    g = build_grid(Domain("disk", 1.0), nr, 4, 5.0, n_angles=4 * nr)
    k = jn_zeros(1, 1)[0]  # Neumann eigenfunction J0(k r)
    r = np.linalg.norm(g.x, axis=1)
    exact = j0(k * r)
    rho = k**2 * exact
    rho -= g.wx @ rho / g.wx.sum()
    exact -= g.wx @ exact / g.wx.sum()
    sol = poisson_neumann(g, rho)
    return np.sqrt(g.wx @ (sol.u - exact) ** 2)


def test_poisson_disk_converges():
    e1, e2 = poisson_error_disk(8), poisson_error_disk(16)
    assert e2 < e1 and e1 / e2 > 2.5


def test_poisson_compatibility():
    g = build_grid(Domain("interval", 1.0), 8, 4)
    with pytest.raises(KfpError):
        poisson_neumann(g, np.ones(g.ncx))


def test_dirichlet_form_bounds(interval_gen):
    g = interval_gen.grid
    gap = velocity_gap(g)
    assert 0.9 < gap < 1.0 + 1e-9
    rng = np.random.default_rng(0)
    for _ in range(5):
        f = rng.random(g.size)
        _, fp = macro_decompose(g, f)
        D = dirichlet_form(interval_gen, f, 0.0)
        assert D.D1 >= gap * h_product(g, fp, fp) - 1e-10
        assert boundary_defect(g, f) >= 0


def test_twisted_gram_positive_for_small_eps(interval_gen):
    tp = TwistedProduct(interval_gen.grid, 0.05)
    G = tp.gram()
    assert np.allclose(G, G.T)
    assert np.linalg.eigvalsh(G).min() > 0
    f = np.random.default_rng(1).random(interval_gen.size)
    assert tp(f, f) == pytest.approx(f @ G @ f)


def test_certificate_small_grid():
    gen = assemble_generator(build_grid(Domain("interval", 1.0, 1.0), 8, 12))
    cert = coercivity_certificate(gen, (0.5, 0.25, 0.125))
    assert cert.valid and cert.lambda_h > 0
    assert cert.c2 / cert.c1 >= 1
    assert len(cert.curve) == 3 and cert.as_dict()["valid"]
