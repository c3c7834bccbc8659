import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from kfplab.discretization import (assemble_dual, assemble_generator, boundary_mass_flux, build_grid, export_coo,
                                   split_generator)
from kfplab.errors import KfpError
from kfplab.geometry import Domain


def column_mass_defect(gen):
    w = gen.grid.weights
    return np.max(np.abs(w @ gen.matrix)) / np.max(np.abs(gen.matrix.data))


@pytest.mark.parametrize("name", ["interval_gen", "specular_gen", "disk_gen"])
def test_mass_conservative_and_stationary(name, request):
    gen = request.getfixturevalue(name)
    assert column_mass_defect(gen) < 1e-13
    assert np.max(np.abs(gen.apply(gen.grid.f_inf))) < 1e-12


@pytest.mark.parametrize("name", ["interval_gen", "specular_gen", "disk_gen"])
def test_metzler_structure(name, request):
    # off-diagonal entries nonnegative: the semigroup preserves positivity
    M = request.getfixturevalue(name).matrix.tocoo()
    off = M.row != M.col
    assert np.all(M.data[off] >= -1e-14)


def test_discrete_maxwellians(interval_gen):
    g = interval_gen.grid
    assert g.wv @ g.mu_h == pytest.approx(1.0)
    out = g.v[:, 0] > 0
    assert np.sum((g.wall_h * g.v[:, 0] * g.wv)[out]) == pytest.approx(1.0)
    assert g.weights @ g.f_inf == pytest.approx(1.0)


def test_disk_specular_mirror_is_reflection(disk_gen):
    g = disk_gen.grid
    for b in g.boundary:
        n = b.normal
        refl = g.v - 2 * (g.v @ n)[:, None] * n[None, :]
        np.testing.assert_allclose(g.v[b.mirror], refl, atol=1e-12)


def test_zero_boundary_flux(disk_gen):
    rng = np.random.default_rng(0)
    f = rng.random(disk_gen.size)
    assert np.max(np.abs(boundary_mass_flux(disk_gen.grid, f))) < 1e-13


def test_dual_is_weighted_transpose(interval_gen):
    dual = assemble_dual(interval_gen)
    rng = np.random.default_rng(1)
    f, g = rng.random(interval_gen.size), rng.random(interval_gen.size)
    w = interval_gen.grid.weights
    assert np.sum(w * (interval_gen.apply(f)) * g) == pytest.approx(np.sum(w * f * dual.apply(g)), rel=1e-12)
    np.testing.assert_allclose(dual.apply(np.ones(interval_gen.size)), 0, atol=1e-12)


def test_split_generator(interval_gen):
    A, B = split_generator(interval_gen, 2.0, 1.0)
    assert np.all(A.diagonal() >= 0) and A.diagonal().max() == pytest.approx(2.0)
    assert abs(B.matrix - interval_gen.matrix + A).max() < 1e-15
    with pytest.raises(KfpError):
        split_generator(interval_gen, -1.0, 1.0)


def test_cfl_limit_value(interval_gen):
    g = interval_gen.grid
    assert interval_gen.cfl_limit() == pytest.approx(g.dx / np.max(np.abs(g.v)))


def test_export_roundtrip(tmp_path, interval_gen):
    path = tmp_path / "L.mtx"
    export_coo(interval_gen.matrix, path)
    back = sp.csr_matrix(scipy.io.mmread(str(path)))
    assert abs(back - interval_gen.matrix).max() == 0


def test_odd_velocity_count_rejected():
    with pytest.raises(KfpError):
        build_grid(Domain("interval", 1.0), 8, 7)


@settings(max_examples=15, deadline=None)
@given(iota=st.floats(0, 1), nx=st.integers(4, 12), nv=st.sampled_from([4, 6, 10, 16]),
       vmax=st.floats(4, 8), extent=st.floats(0.2, 3))
def test_invariants_interval(iota, nx, nv, vmax, extent):
    gen = assemble_generator(build_grid(Domain("interval", extent, iota), nx, nv, vmax))
    assert column_mass_defect(gen) < 1e-12
    assert np.max(np.abs(gen.apply(gen.grid.f_inf))) < 1e-10 * np.max(np.abs(gen.matrix.data))


@settings(max_examples=6, deadline=None)
@given(iota=st.floats(0, 1), nr=st.integers(4, 5), ns=st.integers(4, 5), nang=st.sampled_from([4, 8]))
def test_invariants_disk(iota, nr, ns, nang):
    gen = assemble_generator(build_grid(Domain("disk", 1.0, iota), nr, ns, 5.0, n_angles=nang))
    assert column_mass_defect(gen) < 1e-12
    assert np.max(np.abs(gen.apply(gen.grid.f_inf))) < 1e-10 * np.max(np.abs(gen.matrix.data))
