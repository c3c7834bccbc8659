import numpy as np

from kfplab.config import parse_text
from kfplab.experiments import build, initial_datum, run_scenario, trajectory_csv

DISK = """
[scenario]
experiment = {kind}
[domain]
kind = disk
iota = 0.0 1.0
[grid]
nx = 4
nv = 4
vmax = 5
n_angles = 8
[stepper]
T = 0.5
[initial]
kind = {init}
count = 2
"""


def disk(kind, init="random-seeded"):
    return parse_text(DISK.format(kind=kind, init=init))


def test_disk_mass_conservation():
    rep = run_scenario(disk("mass-conservation"), write=False)
    assert rep.passed, rep.measured


def test_disk_duality_and_stationarity():
    for kind in ("duality", "stationarity", "dg-contraction"):
        rep = run_scenario(disk(kind, "equilibrium" if kind == "stationarity" else "random-seeded"), write=False)
        assert rep.passed, (kind, rep.measured)


def test_disk_certificate_positive():
    rep = run_scenario(disk("hypocoercivity"), write=False)
    assert rep.measured["certificate"]["lambda_h"] > 0


def test_initial_data_kinds():
    for init in ("gaussian-pulse", "wall-layer", "equilibrium"):
        cfg = parse_text(DISK.format(kind="mass-conservation", init=init))
        grid, _ = build(cfg)
        f0 = initial_datum(cfg, grid)
        assert f0.shape == (grid.size,) and np.all(f0 >= 0) and grid.mass(f0) > 0


def test_csv_round_trip_precision():
    rep = run_scenario(disk("mass-conservation"), write=False)
    text = trajectory_csv(rep.trajectory)
    row = text.splitlines()[1].split(",")
    assert float(row[1]) == rep.trajectory.mass[0]
