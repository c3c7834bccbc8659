import pytest

from kfplab.discretization import assemble_generator, build_grid
from kfplab.geometry import Domain


@pytest.fixture(scope="session")
def interval_gen():
    grid = build_grid(Domain("interval", 1.0, 0.5), 16, 16, 6.0)
    return assemble_generator(grid)


@pytest.fixture(scope="session")
def specular_gen():
    grid = build_grid(Domain("interval", 1.0, 0.0), 12, 12, 6.0)
    return assemble_generator(grid)


@pytest.fixture(scope="session")
def disk_gen():
    grid = build_grid(Domain("disk", 1.0, 0.5), 4, 6, 5.0, n_angles=8)
    return assemble_generator(grid)
