"""Plain-text run configurations.

A configuration is an INI file.  ``[environment]`` describes the environment
and composite kinds name their inner environment with ``base = <name>``,
which refers to a section ``[environment.<name>]``.  ``[run]`` holds the
seed base, worker count and output root; ``[moments]`` sets the exponents of
the moment-class preview; every other section is named after a CLI
subcommand and holds that operation's parameters.

Environment kinds and their keys::

    constant        d, value
    periodic        values, periods        (values fill an array of shape (*periods, d))
    quasiperiodic   alphas | golden + d, low, high
    growing-blocks  d, power, low, high
    iid             d, distribution, seed  (uniform:a,b | two-point:v1,v2,p | pareto:tail,floor)
    perturbed       base, normal, level, replacement
    shifted         base, offset
    scaled          base, factor

Unknown sections or keys and missing required keys raise :class:`ConfigError`
naming all of them at once.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .environments import (Constant, Environment, GrowingBlocks, HashedIid, HyperplaneRule,
                           Periodic, Perturbed, QuasiPeriodic, Scaled, Shifted,
                           parse_distribution)

REQUIRED = object()


class ConfigError(ValueError):
    """Raised for malformed, incomplete or inconsistent configurations."""


# value parsers ----------------------------------------------------------------


def _int(text: str) -> int:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    x = float(text)  # accept 1e5 style when it is an exact integer
    if not x.is_integer():
        raise ValueError(f"{text!r} is not an integer")
    return int(x)


def _float(text: str) -> float:
    return float(text.strip())


def _list(conv):
    def parse(text: str):
        return [conv(t) for t in text.replace(";", ",").split(",") if t.strip()]
    return parse


def _str(text: str) -> str:
    return text.strip()


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


ints, floats = _list(_int), _list(_float)

ENV_SCHEMA = {
    "constant": {"d": (_int, REQUIRED), "value": (_float, 1.0)},
    "periodic": {"values": (floats, REQUIRED), "periods": (ints, None)},
    "quasiperiodic": {"alphas": (_str, "golden"), "d": (_int, 1), "low": (_float, 1.0),
                      "high": (_float, 2.0)},
    "growing-blocks": {"d": (_int, 1), "power": (_float, 1.5), "low": (_float, 1.0),
                       "high": (_float, 2.0)},
    "iid": {"d": (_int, REQUIRED), "distribution": (_str, REQUIRED), "seed": (_int, 0)},
    "perturbed": {"base": (_str, REQUIRED), "normal": (_int, 0), "level": (_int, 0),
                  "replacement": (_float, REQUIRED)},
    "shifted": {"base": (_str, REQUIRED), "offset": (ints, REQUIRED)},
    "scaled": {"base": (_str, REQUIRED), "factor": (_float, REQUIRED)},
}

RUN_SCHEMA = {"seed": (_int, 0), "workers": (_int, None), "out": (_str, None)}
MOMENT_SCHEMA = {"p": (_float, 2.0), "q": (_float, 2.0), "r_max": (_int, 64)}

_TOL = (_float, 1e-10)

OPERATION_SCHEMA = {
    "env-report": {"observable": (_str, "c"), "radii": (ints, [8, 16, 32, 64, 128, 256]),
                   "eps_grid": (floats, [0.25, 0.5, 0.9]), "r_max": (_int, 64)},
    "sigma": {"r": (_int, REQUIRED), "boundary": (_str, "dirichlet"), "tol": _TOL},
    "sigma-scan": {"radii": (ints, REQUIRED), "boundary": (_str, "dirichlet"), "tol": _TOL},
    "corrector-1d": {"n": (_int, REQUIRED), "r_norm": (_int, 10**5), "ms": (ints, None)},
    "chi": {"r": (_int, REQUIRED), "epsilon": (_float, REQUIRED), "tol": _TOL,
            "max_residual": (_float, 1e-8)},
    "theta": {"r": (_int, REQUIRED), "epsilon": (_float, REQUIRED), "tol": _TOL,
              "max_defect": (_float, 1e-6)},
    "dirichlet": {"r": (_int, REQUIRED), "direction": (floats, None), "tol": _TOL,
                  "normalize": (_str, "sites")},
    "lemma35": {"r": (ints, REQUIRED), "direction": (floats, None), "tol": _TOL,
                "max_gap": (_float, 1e-8)},
    "iip": {"n": (_int, REQUIRED), "M": (_int, REQUIRED), "r": (_int, 32),
            "r_norm": (_int, 10**5), "z_max": (_float, 4.0), "min_replicas": (_int, 30)},
    "ergodic-avg": {"n": (_int, REQUIRED), "M": (_int, REQUIRED), "observable": (_str, "c"),
                    "r_norm": (_int, 10**5), "z_time": (_float, 3.0), "cap": (_float, None)},
    "conversion": {"n_list": (ints, REQUIRED), "M": (_int, REQUIRED),
                   "observable": (_str, "inv-c"), "r_norm": (_int, 10**5),
                   "ratio_low": (_float, 0.5), "ratio_high": (_float, 2.0)},
    "exit-tail": {"R_list": (ints, REQUIRED), "sigma": (_float, 1.0),
                  "t_grid": (floats, REQUIRED), "M": (_int, REQUIRED),
                  "alpha_target": (_float, 1.0), "slack": (_float, 0.3)},
    "oscillation": {"n_list": (ints, REQUIRED), "T": (_float, 1.0),
                    "delta_list": (floats, REQUIRED), "eps": (_float, REQUIRED),
                    "M": (_int, REQUIRED)},
    "lln": {"n_list": (ints, REQUIRED), "M": (_int, REQUIRED), "delta": (_float, 0.05)},
    "heat-kernel": {"t_list": (floats, REQUIRED), "M": (_int, REQUIRED),
                    "slack": (_float, 0.3)},
}


def _parse_section(name: str, items: dict, schema: dict) -> dict:
    lowered = {k.lower(): k for k in schema}
    unknown = sorted(k for k in items if k.lower() not in lowered)
    if unknown:
        raise ConfigError(f"[{name}] unknown keys: {', '.join(unknown)}; "
                          f"allowed: {', '.join(sorted(schema))}")
    out, missing = {}, []
    for key, (conv, default) in schema.items():
        raw = items.get(key.lower(), items.get(key))
        if raw is None:
            if default is REQUIRED:
                missing.append(key)
            else:
                out[key] = default
            continue
        try:
            out[key] = conv(raw)
        except ValueError as exc:
            raise ConfigError(f"[{name}] bad value for {key}: {exc}") from None
    if missing:
        raise ConfigError(f"[{name}] missing required keys: {', '.join(missing)}")
    return out


# environments -----------------------------------------------------------------


def _check_positive(section: str, key: str, values):
    bad = [float(v) for v in np.atleast_1d(values) if not v > 0]
    if bad:
        raise ConfigError(f"[{section}] {key} must be positive; got {bad}")


def build_environment(sections: dict, name: str = "environment", _seen=()) -> Environment:
    """Construct the environment described by section ``name`` of ``sections``."""
    if name in _seen:
        raise ConfigError(f"cyclic environment reference through [{name}]")
    if name not in sections:
        raise ConfigError(f"missing section [{name}]")
    items = dict(sections[name])
    kind = items.pop("kind", None)
    if kind is None:
        raise ConfigError(f"[{name}] missing required keys: kind")
    kind = kind.strip().lower()
    if kind not in ENV_SCHEMA:
        raise ConfigError(f"[{name}] unknown environment kind {kind!r}; "
                          f"expected one of {', '.join(sorted(ENV_SCHEMA))}")
    p = _parse_section(name, items, ENV_SCHEMA[kind])

    def inner():
        return build_environment(sections, f"environment.{p['base']}", _seen + (name,))

    try:
        if kind == "constant":
            _check_positive(name, "value", p["value"])
            return Constant(p["d"], p["value"])
        if kind == "periodic":
            vals = np.asarray(p["values"], dtype=float)
            _check_positive(name, "values", vals)
            periods = p["periods"] or [len(vals)]
            d = len(periods)
            if vals.size != math.prod(periods) * d:
                raise ConfigError(f"[{name}] expected {math.prod(periods) * d} values for "
                                  f"periods {periods}, got {vals.size}")
            return Periodic(vals.reshape(*periods, d))
        if kind == "quasiperiodic":
            _check_positive(name, "low/high", [p["low"], p["high"]])
            if p["alphas"].lower() == "golden":
                return QuasiPeriodic.golden(p["d"], p["low"], p["high"])
            return QuasiPeriodic(tuple(floats(p["alphas"])), p["low"], p["high"])
        if kind == "growing-blocks":
            _check_positive(name, "low/high", [p["low"], p["high"]])
            return GrowingBlocks(p["d"], p["power"], p["low"], p["high"])
        if kind == "iid":
            return HashedIid(p["d"], parse_distribution(p["distribution"]), p["seed"])
        if kind == "perturbed":
            _check_positive(name, "replacement", p["replacement"])
            return Perturbed(inner(), HyperplaneRule(p["normal"], p["level"]), p["replacement"])
        if kind == "shifted":
            return Shifted(inner(), tuple(p["offset"]))
        if kind == "scaled":
            _check_positive(name, "factor", p["factor"])
            return Scaled(inner(), p["factor"])
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[{name}] {exc}") from None
    raise AssertionError(kind)  # pragma: no cover


# whole files ------------------------------------------------------------------


@dataclass
class RunConfig:
    path: str
    environment: Environment
    environment_spec: dict
    run: dict
    moments: dict
    operations: dict = field(default_factory=dict)  # subcommand -> parsed params
    raw: dict = field(default_factory=dict)

    def operation(self, name: str) -> dict:
        if name in self.operations:
            return dict(self.operations[name])
        # no section: defaults are enough unless something is required
        return _parse_section(name, {}, OPERATION_SCHEMA[name])


def bundled_configs() -> list[str]:
    root = resources.files("condwalk") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def resolve_path(path_or_name: str) -> Path:
    """A filesystem path, or the name of a bundled configuration."""
    p = Path(path_or_name)
    if p.exists():
        return p
    name = path_or_name[:-4] if path_or_name.endswith(".ini") else path_or_name
    candidate = resources.files("condwalk") / "configs" / f"{name}.ini"
    if candidate.is_file():
        return Path(str(candidate))
    raise ConfigError(f"config {path_or_name!r} not found; bundled configs: "
                      f"{', '.join(bundled_configs())}")


def parse_text(text: str, path: str = "<string>", overrides: dict | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str  # keep key case (M, T, R_list)
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    sections = {s: dict(parser[s]) for s in parser.sections()}
    for dotted, value in (overrides or {}).items():
        sec, _, key = dotted.rpartition(".")
        if not sec:
            raise ConfigError(f"override {dotted!r} must look like section.key=value")
        sections.setdefault(sec, {})[key] = value
    known = {"run", "moments", "environment"} | set(OPERATION_SCHEMA)
    unknown = sorted(s for s in sections if s not in known and not s.startswith("environment."))
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(unknown)}")
    env = build_environment(sections)
    run = _parse_section("run", sections.get("run", {}), RUN_SCHEMA)
    moments = _parse_section("moments", sections.get("moments", {}), MOMENT_SCHEMA)
    ops = {s: _parse_section(s, sections[s], OPERATION_SCHEMA[s])
           for s in sections if s in OPERATION_SCHEMA}
    spec = {s: v for s, v in sections.items() if s == "environment" or s.startswith("environment.")}
    return RunConfig(str(path), env, spec, run, moments, ops, sections)


def load(path_or_name: str, overrides: dict | None = None) -> RunConfig:
    path = resolve_path(path_or_name)
    return parse_text(path.read_text(encoding="utf-8"), str(path), overrides)
