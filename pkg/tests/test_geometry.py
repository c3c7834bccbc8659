import numpy as np
import pytest

from kfplab.errors import KfpError
from kfplab.geometry import Domain, boundary_quadrature, domain_from_config


def test_interval_distance_and_normals():
    d = Domain("interval", 2.0)
    np.testing.assert_allclose(d.signed_distance(np.array([0.0, 0.5, 1.0, 1.5, 2.0])), [0, 0.5, 1.0, 0.5, 0])
    assert d.outward_normal(0.0) == -1.0 and d.outward_normal(2.0) == 1.0
    assert d.measure == 2.0 and d.diameter_bound == 1.0


def test_disk_distance_and_normals():
    d = Domain("disk", 1.5)
    x = np.array([[0.0, 1.5], [0.3, 0.4]])
    np.testing.assert_allclose(d.signed_distance(x), [0.0, 1.0])
    np.testing.assert_allclose(d.outward_normal(np.array([0.0, 1.5])), [0.0, 1.0])
    np.testing.assert_allclose(d.normal_field(x)[1], [0.6, 0.8])
    assert d.measure == pytest.approx(np.pi * 2.25)


def test_off_boundary_normal_rejected():
    with pytest.raises(KfpError):
        Domain("interval", 1.0).outward_normal(0.3)


def test_piecewise_iota():
    d = domain_from_config("interval", 1.0, [0.2, 0.9])
    assert d.iota_at(0.0) == 0.2 and d.iota_at(1.0) == 0.9
    disk = Domain("disk", 1.0, (0.0, 1.0))
    assert disk.iota_at(np.array([0.0, 1.0])) == 0.0 and disk.iota_at(np.array([0.0, -1.0])) == 1.0


@pytest.mark.parametrize("bad", [dict(kind="square", extent=1.0), dict(kind="disk", extent=-1.0),
                                 dict(kind="interval", extent=1.0, iota=1.5)])
def test_invalid_domains(bad):
    with pytest.raises(KfpError):
        Domain(**bad)


def test_boundary_quadrature_total_measure():
    for d in (Domain("interval", 1.0), Domain("disk", 2.0)):
        nodes = boundary_quadrature(d, 64)
        assert sum(n.weight for n in nodes) == pytest.approx(d.boundary_measure)
