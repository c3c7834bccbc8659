"""Scenario files: INI sections flattened to dotted keys with a fixed schema.

Example::

    [scenario]
    experiment = relaxation
    seed = 3

    [domain]
    kind = interval
    extent = 1.0
    iota = 1.0

    [grid]
    nx = 24
    nv = 32
"""
from __future__ import annotations

import configparser
import math
import re
from pathlib import Path

from .errors import ConfigError
from .weights import WeightSpec


def _floats(text: str) -> list[float]:
    out = []
    for tok in re.split(r"[,\s]+", text.strip()):
        if not tok:
            continue
        out.append(math.inf if tok.lower() in ("inf", "infinity") else float(tok))
    return out


def _strings(text: str) -> list[str]:
    return [t for t in re.split(r"[;\s]+", text.strip()) if t]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default)
SCHEMA: dict[str, tuple] = {
    "scenario.experiment": (str, "mass-conservation"),
    "scenario.name": (str, "scenario"),
    "scenario.seed": (int, 0),
    "domain.kind": (str, "interval"),
    "domain.extent": (float, 1.0),
    "domain.iota": (_floats, [1.0]),
    "grid.nx": (int, 64),
    "grid.nv": (int, 64),
    "grid.vmax": (float, 6.0),
    "grid.n_angles": (int, 0),
    "stepper.scheme": (str, "imex"),
    "stepper.dt": (float, 0.0),  # 0 selects the CFL limit
    "stepper.T": (float, 5.0),
    "initial.kind": (str, "random-seeded"),
    "initial.count": (int, 1),
    "initial.x0": (_floats, []),  # empty: domain centre
    "initial.v0": (_floats, []),
    "initial.sigma_x": (float, 0.1),
    "initial.sigma_v": (float, 1.0),
    "initial.layer": (float, 0.05),
    "weights.list": (_strings, []),
    "probes.p": (_floats, [1.0, 2.0, math.inf]),
    "probes.window": (_floats, [0.5, 1.0]),
    "probes.q": (float, 0.8),
    "probes.eps_scan": (_floats, [2.0**-k for k in range(1, 9)]),
    "probes.tolerance": (float, 0.0),
    "probes.refine": (_bool, True),
    "output.dir": (str, "."),
    "output.csv": (str, ""),
    "output.json": (str, ""),
}

EXPERIMENTS = (
    "mass-conservation",
    "stationarity",
    "relaxation",
    "hypocoercivity",
    "duality",
    "dg-contraction",
    "splitting-decay",
    "boundary-penalization",
    "reference-compare",
    "ultracontractivity",
)


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]", s)
        if m:
            current = m.group(1).strip().lower()
            continue
        if current == section and re.match(rf"{re.escape(key)}\s*[=:]", s, flags=re.I):
            return i
    return None


def parse_text(text: str) -> dict:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed scenario file: {exc}") from exc
    cfg = {k: (list(d) if isinstance(d, list) else d) for k, (_, d) in SCHEMA.items()}
    canonical = {k.lower(): k for k in SCHEMA}  # section and option names are case-insensitive
    for section in cp.sections():
        for key, raw in cp.items(section):
            dotted = f"{section.lower()}.{key}"
            line = _line_of(text, section.lower(), key)
            if dotted not in canonical:
                raise ConfigError("unknown configuration key", key=dotted, line=line)
            dotted = canonical[dotted]
            parser = SCHEMA[dotted][0]
            try:
                cfg[dotted] = parser(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value {raw!r}: {exc}", key=dotted, line=line) from exc
    validate(cfg)
    return cfg


def load(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {p}: {exc}") from exc
    return parse_text(text)


def validate(cfg: dict) -> None:
    if cfg["scenario.experiment"] not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {cfg['scenario.experiment']!r}", key="scenario.experiment")
    if cfg["domain.kind"] not in ("interval", "disk"):
        raise ConfigError("domain kind must be interval or disk", key="domain.kind")
    for w in cfg["weights.list"]:
        parse_weight(w)
    if len(cfg["probes.window"]) != 2:
        raise ConfigError("probes.window needs two fractions", key="probes.window")


def parse_weight(text: str) -> WeightSpec:
    """poly:k | gauss:zeta | gauss-neg:zeta | stretched:k,zeta,s | maxwell:p."""
    try:
        name, _, arg = text.partition(":")
        vals = _floats(arg) if arg else []
        if name == "poly":
            return WeightSpec.polynomial(vals[0])
        if name == "gauss":
            return WeightSpec.gaussian(vals[0])
        if name == "gauss-neg":
            return WeightSpec.gaussian_negative(vals[0])
        if name == "stretched":
            k, zeta, s = vals
            return WeightSpec(k=k, zeta=zeta, s=s)
        if name == "maxwell":
            return WeightSpec.maxwell_power(vals[0])
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"bad weight {text!r}: {exc}", key="weights.list") from exc
    except Exception as exc:  # construction rejected by WeightSpec
        raise ConfigError(f"bad weight {text!r}: {exc}", key="weights.list") from exc
    raise ConfigError(f"unknown weight form {text!r}", key="weights.list")


def echo(cfg: dict) -> dict:
    """JSON-safe copy of the resolved configuration."""
    out = {}
    for k, v in sorted(cfg.items()):
        if isinstance(v, float) and math.isinf(v):
            v = "inf"
        elif isinstance(v, list):
            v = ["inf" if isinstance(x, float) and math.isinf(x) else x for x in v]
        out[k] = v
    return out
