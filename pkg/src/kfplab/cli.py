"""Command line interface.

Exit codes: 0 success, 1 acceptance check failed, 2 configuration or usage
error, 3 numerical abort.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import EXPERIMENTS, load, parse_weight
from .errors import CFLViolation, ConfigError, KfpError, NumericalAbort, WeightClassError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _finish(report) -> int:
    _emit({"kind": report.kind, "passed": report.passed, "checks": report.checks,
           "measured": report.to_dict()["measured"], "wall_clock": report.wall_clock})
    return EXIT_OK if report.passed else EXIT_FAIL


def _load(args, experiment: str | None = None) -> dict:
    cfg = load(args.config)
    if experiment is not None:
        cfg["scenario.experiment"] = experiment
    if getattr(args, "out", None):
        cfg["output.dir"] = args.out
        cfg["output.csv"] = cfg["output.csv"] or f"{cfg['scenario.name']}.csv"
        cfg["output.json"] = cfg["output.json"] or f"{cfg['scenario.name']}.json"
    return cfg


def cmd_run(args) -> int:
    from .experiments import run_scenario

    return _finish(run_scenario(_load(args, getattr(args, "experiment", None))))


def cmd_evolve(args) -> int:
    from .evolution import evolve
    from .experiments import build, initial_datum, stepper_for, trajectory_csv

    cfg = _load(args)
    grid, gen = build(cfg)
    traj = evolve(gen, initial_datum(cfg, grid), cfg["stepper.T"], stepper_for(cfg, gen))
    text = trajectory_csv(traj)
    out = Path(cfg["output.dir"]) / (cfg["output.csv"] or f"{cfg['scenario.name']}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    _emit({"csv": str(out), "steps": len(traj.times) - 1, "dt": traj.dt,
           "mass_drift": float(np.max(np.abs(traj.mass / traj.mass[0] - 1)))})
    return EXIT_OK


def cmd_rates(args) -> int:
    from .functionals import fit_power, fit_rate

    with open(args.input, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or args.column not in rows[0]:
        raise ConfigError(f"column {args.column!r} not found", key="--column")
    t = np.array([float(r["t"]) for r in rows])
    y = np.array([float(r[args.column]) for r in rows])
    fit = (fit_power if args.power else fit_rate)(t, y, tuple(args.window) if args.window else None)
    _emit({"column": args.column, "model": "power" if args.power else "exponential",
           "slope": fit.slope, "intercept": fit.intercept, "residual": fit.residual,
           "window": list(fit.window), "points": fit.points})
    return EXIT_OK


def cmd_classify(args) -> int:
    from .weights import WeightSpec, classify, kappa_star, kappa_sup

    if args.weight:
        w = parse_weight(args.weight)
    else:
        w = WeightSpec(k=args.k, zeta=args.zeta, s=args.s, form=args.form)
    tags = sorted(classify(w, args.dim))
    ks = kappa_star(w, args.dim)
    try:
        ksup = kappa_sup(w, args.dim)
    except WeightClassError:
        ksup = math.inf
    _emit({"weight": w.label, "dim": args.dim, "classes": tags,
           "kappa_star": ks if math.isfinite(ks) else str(ks),
           "kappa_sup": ksup if math.isfinite(ksup) else str(ksup)})
    return EXIT_OK


def cmd_hypocoercivity(args) -> int:
    from .experiments import run_scenario

    cfg = _load(args, "hypocoercivity")
    if args.eps_scan:
        cfg["probes.eps_scan"] = args.eps_scan
    return _finish(run_scenario(cfg))


def cmd_export(args) -> int:
    from .discretization import assemble_dual, export_coo
    from .experiments import build

    cfg = load(args.config)
    grid, gen = build(cfg)
    op = assemble_dual(gen) if args.dual else gen
    export_coo(op.matrix, args.output)
    _emit({"path": args.output, "size": gen.size, "nnz": int(op.matrix.nnz)})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kfplab", description="Kinetic Fokker-Planck relaxation lab")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the experiment named in a scenario file")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("evolve", help="evolve the initial datum and write the diagnostics CSV")
    e.add_argument("--config", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evolve)

    ra = sub.add_parser("rates", help="fit a rate to a diagnostics CSV column")
    ra.add_argument("--in", dest="input", required=True)
    ra.add_argument("--column", required=True)
    ra.add_argument("--window", type=float, nargs=2)
    ra.add_argument("--power", action="store_true", help="fit a power law instead of an exponential")
    ra.set_defaults(func=cmd_rates)

    c = sub.add_parser("classify-weight", help="weight classes and decay constants")
    c.add_argument("--weight", help="compact form such as poly:3 or gauss:0.2")
    c.add_argument("--k", type=float, default=0.0)
    c.add_argument("--zeta", type=float, default=0.0)
    c.add_argument("--s", type=float, default=0.0)
    c.add_argument("--form", default="stretched")
    c.add_argument("--dim", type=int, default=3)
    c.set_defaults(func=cmd_classify)

    h = sub.add_parser("hypocoercivity", help="discrete coercivity certificate")
    h.add_argument("--config", required=True)
    h.add_argument("--out")
    h.add_argument("--eps-scan", type=float, nargs="+")
    h.set_defaults(func=cmd_hypocoercivity)

    x = sub.add_parser("export-operator", help="write the generator as a Matrix Market file")
    x.add_argument("--config", required=True)
    x.add_argument("--output", required=True)
    x.add_argument("--dual", action="store_true")
    x.set_defaults(func=cmd_export)

    for kind in EXPERIMENTS:
        if kind == "hypocoercivity":
            continue
        s = sub.add_parser(kind, help=f"run the {kind} experiment")
        s.add_argument("--config", required=True)
        s.add_argument("--out")
        s.set_defaults(func=cmd_run, experiment=kind)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, CFLViolation) as exc:
        print(f"kfplab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"kfplab: numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (KfpError, OSError) as exc:
        print(f"kfplab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
