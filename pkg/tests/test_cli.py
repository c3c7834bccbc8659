import json
from pathlib import Path

import pytest

from kfplab.cli import main
from kfplab.experiments import run_scenario
from kfplab.config import parse_text

SMALL = """
[scenario]
experiment = {kind}
name = small
[domain]
iota = 0.5
[grid]
nx = 8
nv = 8
[stepper]
T = 0.5
[initial]
count = 2
"""


def write(tmp_path, kind):
    p = tmp_path / f"{kind}.ini"
    p.write_text(SMALL.format(kind=kind))
    return p


def test_run_writes_csv_and_json(tmp_path, capsys):
    cfg = write(tmp_path, "mass-conservation")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
    data = json.loads((tmp_path / "out" / "small.json").read_text())
    assert data["passed"] and data["inputs"]["grid.nx"] == 8 and "version" in data
    header = (tmp_path / "out" / "small.csv").read_text().splitlines()[0]
    assert header == "t,mass,min"


@pytest.mark.parametrize("kind", ["stationarity", "dg-contraction", "duality"])
def test_experiment_subcommands(tmp_path, kind):
    assert main([kind, "--config", str(write(tmp_path, kind))]) == 0


def test_rates_on_evolve_output(tmp_path, capsys):
    cfg = write(tmp_path, "mass-conservation")
    assert main(["evolve", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    assert main(["rates", "--in", str(tmp_path / "small.csv"), "--column", "mass"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["slope"]) < 1e-10


def test_classify_weight(capsys):
    assert main(["classify-weight", "--weight", "poly:5", "--dim", "3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert {"W", "W0", "W2"} <= set(out["classes"]) and out["kappa_star"] == -2.0


def test_export_operator(tmp_path):
    cfg = write(tmp_path, "mass-conservation")
    assert main(["export-operator", "--config", str(cfg), "--output", str(tmp_path / "L.mtx")]) == 0
    assert Path(tmp_path / "L.mtx").read_text().startswith("%%MatrixMarket")


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[grid]\nbogus = 1\n")
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["no-such-command"]) == 2
    cfl = tmp_path / "cfl.ini"
    cfl.write_text(SMALL.format(kind="mass-conservation").replace("T = 0.5", "T = 0.5\ndt = 1.0"))
    assert main(["run", "--config", str(cfl)]) == 2


def test_failing_check_gives_exit_one(tmp_path):
    # tolerance below rounding: the mass check must fail honestly
    p = tmp_path / "tight.ini"
    p.write_text(SMALL.format(kind="mass-conservation") + "[probes]\ntolerance = 1e-300\n")
    assert main(["run", "--config", str(p)]) == 1


def test_report_is_reproducible():
    cfg = parse_text(SMALL.format(kind="dg-contraction"))
    a, b = run_scenario(cfg, write=False), run_scenario(cfg, write=False)
    assert a.measured == b.measured
