"""Experiment drivers: one function per experiment kind, each returning a Report."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import echo, parse_weight
from .discretization import assemble_dual, assemble_generator, build_grid, split_generator
from .errors import KfpError
from .evolution import Stepper, decay_rate_of_B, evolve, evolve_dual, pairing
from .functionals import (boundary_penalization, dg_boundary_check, dg_weight, fit_power, fit_rate,
                          relaxation_distance, weighted_lp_norm, zero_flux_residual)
from .geometry import domain_from_config
from .hypocoercivity import coercivity_certificate
from .parallel import map_ordered
from .reference import GaussianState, density_sup, interior_compare, mehler_propagate, project_to_grid
from .weights import WeightSpec, chi, classify, split_parameters, varpi


@dataclass
class Report:
    kind: str
    inputs: dict
    measured: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    version: str = __version__
    seed: int = 0
    trajectory: object = None  # Trajectory for CSV export, not serialised

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "trajectory"}
        d["passed"] = self.passed
        return _jsonable(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _fit_dict(fit) -> dict:
    return {"window": list(fit.window), "slope": fit.slope, "intercept": fit.intercept,
            "residual": fit.residual, "points": fit.points}


# ---------------------------------------------------------------------------
# building blocks


def build(cfg: dict, nx: int | None = None, nv: int | None = None):
    dom = domain_from_config(cfg["domain.kind"], cfg["domain.extent"], cfg["domain.iota"])
    grid = build_grid(dom, nx or cfg["grid.nx"], nv or cfg["grid.nv"], cfg["grid.vmax"],
                      n_angles=cfg["grid.n_angles"] or None)
    return grid, assemble_generator(grid)


def stepper_for(cfg: dict, gen) -> Stepper:
    dt = cfg["stepper.dt"]
    if not dt > 0:
        dt = gen.cfl_limit()
    return Stepper(cfg["stepper.scheme"], dt)


def initial_datum(cfg: dict, grid, index: int = 0) -> np.ndarray:
    kind = cfg["initial.kind"]
    if kind == "equilibrium":
        return grid.f_inf.copy()
    if kind == "random-seeded":
        rng = np.random.default_rng([cfg["scenario.seed"], index])
        return rng.random(grid.size)
    if kind == "gaussian-pulse":
        return project_to_grid(pulse_state(cfg, grid), grid)
    if kind == "wall-layer":
        delta = np.asarray(grid.domain.signed_distance(grid.x), dtype=float).reshape(-1)
        prof = np.exp(-delta / cfg["initial.layer"])
        return np.outer(prof, grid.mu_h).ravel()
    raise KfpError(f"unknown initial datum kind {kind!r}")


def pulse_state(cfg: dict, grid) -> GaussianState:
    d = grid.dim
    centre = np.full(d, grid.domain.extent / 2) if d == 1 else np.zeros(d)
    x0 = np.array(cfg["initial.x0"] or centre, dtype=float)
    v0 = np.array(cfg["initial.v0"] or np.zeros(d), dtype=float)
    sx = cfg["initial.sigma_x"] or 2 * grid.dx
    sv = cfg["initial.sigma_v"] or float(grid.wv[0])
    return GaussianState.isotropic(x0, v0, sx, sv)


def weight_list(cfg: dict, default):
    return [parse_weight(w) for w in cfg["weights.list"]] or list(default)


def _norm_probes(grid, weights, ps, mass=None):
    probes = {}
    for w in weights:
        for p in ps:
            name = f"{w.label}|p={p:g}"
            if mass is None:
                probes[name] = (lambda f, w=w, p=p: weighted_lp_norm(grid, f, w, p))
            else:
                probes[name] = (lambda f, w=w, p=p: relaxation_distance(grid, f, mass, w, p))
    return probes


# ---------------------------------------------------------------------------
# experiments


def exp_mass_conservation(cfg, report):
    grid, gen = build(cfg)
    st = stepper_for(cfg, gen)
    T = cfg["stepper.T"]
    drift, fmin, flux = 0.0, np.inf, 0.0
    traj = None
    for i in range(cfg["initial.count"]):
        f0 = initial_datum(cfg, grid, i)
        traj = evolve(gen, f0, T, st)
        drift = max(drift, float(np.max(np.abs(traj.mass / traj.mass[0] - 1))))
        fmin = min(fmin, float(traj.column("min").min()))
        flux = max(flux, max(zero_flux_residual(grid, s) for s in traj.snapshots))
    report.trajectory = traj
    report.measured.update(mass_drift=drift, min_value=fmin, zero_flux_residual=flux, dt=st.dt, steps=len(traj.times) - 1)
    tol = cfg["probes.tolerance"] or 1e-12
    report.checks.update(mass_drift=drift <= tol, positivity=fmin >= -1e-14, zero_flux=flux <= 1e-12)


def exp_stationarity(cfg, report):
    grid, gen = build(cfg)
    st = stepper_for(cfg, gen)
    finf = grid.f_inf
    res = float(np.max(np.abs(gen.apply(finf))))
    traj = evolve(gen, finf, cfg["stepper.T"], st, probes={"dev": lambda f: float(np.max(np.abs(f - finf)))})
    drift = float(traj.column("dev").max())
    report.trajectory = traj
    report.measured.update(generator_residual=res, drift=drift)
    report.checks.update(generator_residual=res <= 1e-12, drift=drift <= 1e-10)


def exp_dg_contraction(cfg, report):
    grid, gen = build(cfg)
    st = stepper_for(cfg, gen)
    T = cfg["stepper.T"]
    probes = {"dg_p1": lambda f: weighted_lp_norm(grid, f, dg_weight(1.0), 1.0),
              "dg_p2": lambda f: weighted_lp_norm(grid, f, dg_weight(2.0), 2.0)}

    def one(i):
        tr = evolve(gen, initial_datum(cfg, grid, i), T, st, probes=probes)
        inc = {k: float(np.max(np.diff(tr.column(k)))) for k in probes}
        dg_ok = all(dg_boundary_check(grid, s, 2.0).holds for s in tr.snapshots)
        return tr, inc, dg_ok

    results = map_ordered(one, range(cfg["initial.count"]))
    worst = {k: max(r[1][k] for r in results) for k in probes}
    report.trajectory = results[-1][0]
    report.measured.update(max_step_increase=worst, boundary_jensen=all(r[2] for r in results))
    report.checks.update({f"non_increasing_{k}": v <= 1e-8 for k, v in worst.items()})
    report.checks["boundary_jensen"] = all(r[2] for r in results)


def exp_duality(cfg, report):
    grid, gen = build(cfg)
    dual = assemble_dual(gen)
    st = stepper_for(cfg, gen)
    T = cfg["stepper.T"]
    rng = np.random.default_rng(cfg["scenario.seed"])
    w = grid.weights
    worst = 0.0
    for _ in range(cfg["initial.count"]):
        f0, gT = rng.random(grid.size), rng.standard_normal(grid.size)
        fT = evolve(gen, f0, T, st).final
        g0 = evolve_dual(dual, gT, T, st).final
        scale = math.sqrt(w @ f0**2) * math.sqrt(w @ gT**2)
        worst = max(worst, abs(pairing(grid, fT, gT) - pairing(grid, f0, g0)) / scale)
    ones = evolve_dual(dual, np.ones(grid.size), T, st).final
    const_dev = float(np.max(np.abs(ones - 1)))
    report.measured.update(duality_defect=worst, constant_preservation=const_dev, pairs=cfg["initial.count"])
    weights = weight_list(cfg, [WeightSpec.gaussian_negative(0.25)])
    m = weights[0]
    g_seed = np.abs(rng.standard_normal(grid.size))
    tr = evolve_dual(dual, g_seed, T, st, probes={"l1_m": lambda g: weighted_lp_norm(grid, g, m, 1.0)})
    # backward in time: ratio ||g(t)|| / ||g(T)|| as a function of elapsed time T - t
    elapsed = T - tr.times
    ratio = tr.column("l1_m") / tr.column("l1_m")[0]
    if len(elapsed) >= 9 and elapsed[-1] > 0:
        fit = fit_rate(elapsed, ratio, (elapsed[len(elapsed) // 2], elapsed[-1]))
        report.fits["dual_weighted_growth"] = _fit_dict(fit)
        report.measured["dual_growth_constant"] = float(np.max(ratio * np.exp(-fit.slope * elapsed)))
    report.checks.update(duality=worst <= 1e-12, constants=const_dev <= 1e-12)


def exp_hypocoercivity(cfg, report):
    grid, gen = build(cfg)
    t0 = time.perf_counter()
    cert = coercivity_certificate(gen, tuple(cfg["probes.eps_scan"]))
    el = time.perf_counter() - t0
    report.measured.update(certificate=cert.as_dict(), eigen_seconds=el)
    small = [r for r in cert.curve if r[0] <= 0.25 and r[2] > 0]
    ratio = max((r[3] / r[2] for r in small), default=math.inf)
    report.measured["c2_over_c1_eps_le_quarter"] = ratio
    report.checks.update(lambda_positive=cert.lambda_h > 0, equivalence=bool(small) and ratio <= 3.0, runtime=el <= 300.0)


def exp_relaxation(cfg, report):
    grid, gen = build(cfg)
    st = stepper_for(cfg, gen)
    T = cfg["stepper.T"]
    d = grid.dim
    weights = weight_list(cfg, [WeightSpec.polynomial(d + 2), WeightSpec.gaussian(0.2)])
    ps = cfg["probes.p"]
    a, b = cfg["probes.window"]
    window = (a * T, b * T)

    def one(i):
        f0 = initial_datum(cfg, grid, i)
        tr = evolve(gen, f0, T, st, probes=_norm_probes(grid, weights, ps, mass=grid.mass(f0)))
        return tr, {k: fit_rate(tr.times, tr.column(k), window) for k in tr.diagnostics if "|p=" in k}

    results = map_ordered(one, range(cfg["initial.count"]))
    report.trajectory = results[0][0]
    cert = coercivity_certificate(gen, tuple(cfg["probes.eps_scan"]))
    lam_h = cert.lambda_h
    rates, spreads, factor_ok, lower_ok = {}, {}, True, True
    for key in results[0][1]:
        slopes = np.array([r[1][key].slope for r in results])
        rates[key] = slopes.tolist()
        mean = float(slopes.mean())
        spreads[key] = float((slopes.max() - slopes.min()) / abs(mean))
        report.fits[key] = [_fit_dict(r[1][key]) for r in results]
        factor_ok &= bool(0.5 <= abs(mean) / lam_h <= 2.0) if lam_h > 0 else False
        lower_ok &= bool(abs(mean) >= 0.9 * lam_h)
    allneg = all(max(v) < 0 for v in rates.values())
    report.measured.update(rates=rates, relative_spread=spreads, lambda_h=lam_h, eps=cert.eps,
                           ratio_to_lambda_h={k: abs(float(np.mean(v))) / lam_h for k, v in rates.items()})
    report.checks.update(negative_rates=allneg, agreement_10pct=all(s <= 0.10 for s in spreads.values()),
                         certificate_lower_bound=lower_ok, within_factor_2_of_lambda_h=factor_ok)


def exp_ultracontractivity(cfg, report):
    grid, gen = build(cfg)
    st = stepper_for(cfg, gen)
    T = cfg["stepper.T"]
    d = grid.dim
    state0 = pulse_state(cfg, grid)
    f0 = project_to_grid(state0, grid)
    weights = weight_list(cfg, [])
    probes = {"sup": lambda f: float(np.max(np.abs(f)))}
    if len(weights) >= 2:
        w, wp = weights[0], weights[1]
        n0 = weighted_lp_norm(grid, f0, w, 1.0)
        probes["ratio_weighted"] = lambda f: weighted_lp_norm(grid, f, wp, math.inf) / n0
    traj = evolve(gen, f0, T, st, probes=probes)
    report.trajectory = traj
    t = traj.times
    window = (4 * traj.dt, T)
    fit = fit_power(t, traj.column("sup"), window)
    sel = (t >= window[0] - 1e-12)
    ref = np.array([density_sup(mehler_propagate(state0, s)) for s in t[sel]])
    dev = float(np.max(np.abs(traj.column("sup")[sel] / ref - 1)))
    ref_fit = fit_power(t[sel], ref, window)
    report.fits["sup_power"] = _fit_dict(fit)
    report.fits["mehler_power"] = _fit_dict(ref_fit)
    if "ratio_weighted" in probes:
        report.fits["weighted_ratio_power"] = _fit_dict(fit_power(t, traj.column("ratio_weighted"), window))
    target = -2.0 * d
    report.measured.update(power=fit.slope, target_power=target, max_relative_deviation_from_mehler=dev,
                           dt=traj.dt, window=list(window))
    report.checks.update(power_within_15pct=abs(fit.slope - target) <= 0.15 * abs(target), mehler_within_20pct=dev <= 0.20)


def exp_reference_compare(cfg, report):
    T = cfg["stepper.T"]
    levels = [cfg["grid.nx"], 2 * cfg["grid.nx"]] if cfg["probes.refine"] else [cfg["grid.nx"]]
    errs, contain = [], 0.0
    for nx in levels:
        grid, gen = build(cfg, nx=nx)
        st0 = pulse_state(cfg, grid)
        f0 = project_to_grid(st0, grid)
        traj = evolve(gen, f0, T, stepper_for(cfg, gen))
        r = interior_compare(grid, traj.final, st0, T)
        errs.append(r["l1_error"])
        contain = max(contain, r["containment_mass"])
        if report.trajectory is None:
            report.trajectory = traj
    report.measured.update(l1_error=errs, containment_mass=contain, grid={"nx": levels, "nv": cfg["grid.nv"]})
    report.checks["l1_error"] = errs[0] <= 5e-2
    report.checks["containment"] = contain < 1e-6
    if len(errs) > 1:
        ratio = errs[0] / errs[1]
        report.measured["refinement_ratio"] = ratio
        report.checks["halving_30pct"] = 2 * 0.7 <= ratio <= 2 * 1.3


def exp_splitting_decay(cfg, report):
    grid, gen = build(cfg)
    st = stepper_for(cfg, gen)
    d = grid.dim
    weights = weight_list(cfg, [WeightSpec.polynomial(d + 2)])
    w = weights[0]
    tags = classify(w, d)
    sp_ = split_parameters(w, d)
    r = grid.speed
    bound = max(float(np.max(varpi(w, p, r, d=d) - sp_.M * chi(r / sp_.R))) for p in (1.0, 2.0, math.inf))
    A, B = split_generator(gen, sp_.M, sp_.R)
    rates = {}
    for p in cfg["probes.p"]:
        k, fits = decay_rate_of_B(B, w, p, cfg["stepper.T"], st, samples=cfg["initial.count"],
                                  seed=cfg["scenario.seed"], window=tuple(cfg["probes.window"]))
        rates[f"p={p:g}"] = k
        report.fits[f"p={p:g}"] = [_fit_dict(f) for f in fits]
    report.measured.update(M=sp_.M, R=sp_.R, kappa_star=sp_.kappa_star, target=sp_.target, tags=sorted(tags),
                           varpi_minus_split_max=bound, rates=rates)
    report.checks.update(in_W2="W2" in tags, pointwise_bound=bound <= sp_.target,
                         negative_rate=all(v < 0 for v in rates.values()))


def exp_boundary_penalization(cfg, report):
    T = cfg["stepper.T"]
    q = cfg["probes.q"]
    levels = [(cfg["grid.nx"], cfg["grid.nv"])]
    if cfg["probes.refine"]:
        levels.append((2 * cfg["grid.nx"], cfg["grid.nv"]))
    base, control = [], []
    for nx, nv in levels:
        grid, gen = build(cfg, nx=nx, nv=nv)
        st = stepper_for(cfg, gen)
        f0 = initial_datum(cfg, grid)
        nsteps = int(math.ceil(T / st.dt - 1e-9))
        traj = evolve(gen, f0, T, st, snapshot_every=max(1, nsteps // 400))
        beta = 1.0 / (2 * (grid.dim + 1))
        base.append(boundary_penalization(grid, traj, q)["ratio_l1"])
        control.append(boundary_penalization(grid, traj, q, beta=2 * beta)["ratio_l1"])
        if report.trajectory is None:
            report.trajectory = traj
    report.measured.update(C_hat=base, C_hat_doubled_beta=control, levels=levels)
    if len(base) > 1:
        g_base = base[1] / base[0]
        g_ctrl = control[1] / control[0]
        report.measured.update(refinement_ratio=g_base, control_refinement_ratio=g_ctrl)
        report.checks["stable_20pct"] = abs(g_base - 1) <= 0.20
        report.checks["control_grows_faster"] = g_ctrl > 1 and g_ctrl > g_base
    report.checks["finite"] = all(np.isfinite(base))


EXPERIMENT_FUNCS = {
    "mass-conservation": exp_mass_conservation,
    "stationarity": exp_stationarity,
    "dg-contraction": exp_dg_contraction,
    "duality": exp_duality,
    "hypocoercivity": exp_hypocoercivity,
    "relaxation": exp_relaxation,
    "ultracontractivity": exp_ultracontractivity,
    "reference-compare": exp_reference_compare,
    "splitting-decay": exp_splitting_decay,
    "boundary-penalization": exp_boundary_penalization,
}


def run_scenario(cfg: dict, write: bool = True) -> Report:
    kind = cfg["scenario.experiment"]
    report = Report(kind, echo(cfg), seed=cfg["scenario.seed"])
    t0 = time.perf_counter()
    EXPERIMENT_FUNCS[kind](cfg, report)
    report.wall_clock = time.perf_counter() - t0
    if write:
        write_outputs(cfg, report)
    return report


def trajectory_csv(traj) -> str:
    buf = io.StringIO()
    cols = list(traj.diagnostics)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + cols)
    for k in range(len(traj.times)):
        w.writerow([format(float(traj.times[k]), ".17g")] + [format(float(traj.diagnostics[c][k]), ".17g") for c in cols])
    return buf.getvalue()


def write_outputs(cfg: dict, report: Report) -> None:
    out = Path(cfg["output.dir"])
    if cfg["output.csv"] and report.trajectory is not None:
        p = out / cfg["output.csv"]
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(trajectory_csv(report.trajectory))
    if cfg["output.json"]:
        p = out / cfg["output.json"]
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(report.to_json() + "\n")
