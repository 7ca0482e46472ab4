"""Command-line entry point.

Usage::

    condwalk SUBCOMMAND CONFIG [--seed S] [--workers W] [--out DIR] [--set section.key=value ...]
    condwalk validate CONFIG

``CONFIG`` is an INI path or the name of a bundled configuration
(``constant-d2``, ``iid-d2``, ``periodic-d1``, ``quasi-d1``).  Outputs go to
``<root>/<subcommand>/`` where the root is ``--out``, else ``$CONDWALK_OUT``,
else ``out`` from the ``[run]`` section, else ``./condwalk-out``.  Each run
writes ``manifest.json`` before starting and finalizes it afterwards.

Exit status: 0 on success or pass, 2 when an assertion of the run fails,
1 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import os
import platform
import sys
import time
import traceback
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import io
from .config import OPERATION_SCHEMA, ConfigError, RunConfig, load
from .corrector import chi_eps, corrector_1d, harmonic_defect, theta
from .environments import (LocalObservable, averaging_diagnostic, constant_observable,
                           edge_conductance, inverse_conductance, moment_report, pi_observable,
                           temperedness_diagnostic)
from .experiments import (ExperimentConfig, conversion_check, ergodic_average_experiment,
                          exit_tail_experiment, heat_kernel_experiment, iip_experiment,
                          lln_experiment, oscillation_experiment)
from .homogenize import StationaryEdgeField, dirichlet_energy, effective_sigma, lemma35_check

OUT_ENV_VAR = "CONDWALK_OUT"
SUBCOMMANDS = tuple(OPERATION_SCHEMA)

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2


@dataclass
class RunManifest:
    subcommand: str
    config_path: str
    parameters: dict
    seed_base: int
    workers: int
    output_dir: str
    started: float = field(default_factory=time.time)
    finished: float | None = None
    status: str = "running"
    exit_code: int | None = None
    passed: bool | None = None
    outputs: list = field(default_factory=list)
    error: str = ""

    def versions(self) -> dict:
        out = {"python": platform.python_version(), "platform": platform.platform()}
        for pkg in ("artifact", "numpy", "scipy", "numba"):
            try:
                out[pkg] = metadata.version(pkg)
            except metadata.PackageNotFoundError:
                out[pkg] = None
        return out

    def doc(self, cfg: RunConfig) -> dict:
        return {
            "subcommand": self.subcommand, "config_path": self.config_path,
            "config_sections": cfg.raw, "parameters": self.parameters,
            "seed_base": self.seed_base, "workers": self.workers,
            "output_dir": self.output_dir, "started": self.started, "finished": self.finished,
            "elapsed": None if self.finished is None else self.finished - self.started,
            "status": self.status, "exit_code": self.exit_code, "passed": self.passed,
            "outputs": self.outputs, "error": self.error, "versions": self.versions(),
            "config_hash": io.config_hash({"sections": cfg.raw, "seed": self.seed_base,
                                           "subcommand": self.subcommand}),
        }


OBSERVABLES = {
    "c": edge_conductance,
    "inv-c": inverse_conductance,
    "one": lambda: constant_observable(1.0),
    "zero": lambda: constant_observable(0.0),
    "pi": pi_observable,
}


def observable(name: str) -> LocalObservable:
    if name not in OBSERVABLES:
        raise ConfigError(f"unknown observable {name!r}; expected one of {sorted(OBSERVABLES)}")
    return OBSERVABLES[name]()


def _direction(d: int, values) -> StationaryEdgeField:
    if values is None:
        values = [1.0] + [0.0] * (d - 1)
    if len(values) != d:
        raise ConfigError(f"direction needs {d} components, got {len(values)}")
    return StationaryEdgeField.constant(values)


# subcommand bodies --------------------------------------------------------------
# Each returns (passed, list of written paths); passed is None when nothing is asserted.


def _env_report(cfg, p, ctx):
    env = cfg.environment
    f = observable(p["observable"])
    avg = averaging_diagnostic(env, f, p["radii"])
    mom = moment_report(env, cfg.moments["p"], cfg.moments["q"], cfg.moments["r_max"])
    tmp = temperedness_diagnostic(env, p["eps_grid"], p["r_max"])
    out = ctx.out
    files = [
        io.write_csv(out / "averaging.csv", ["r", "average", "gap_to_last", "envelope"], avg.rows()),
        io.write_csv(out / "moments.csv", ["n", "c_p_block_sum", "c_minus_q_block_sum",
                                           "c_p_sup", "c_minus_q_sup"],
                     zip(mom.radii, mom.p_block_sums, mom.q_block_sums, mom.p_block_sups,
                         mom.q_block_sups)),
        io.write_csv(out / "temperedness.csv", ["eps", "n", "fraction_outside"],
                     [[e, n, fr] for e, row in zip(tmp.eps_grid, tmp.fractions)
                      for n, fr in zip(tmp.radii, row)]),
    ]
    files.append(io.write_json(out / "env_report.json", {
        "averaging": {"observable": p["observable"], "converging": avg.converging,
                      "non_averaging_suspected": avg.non_averaging_suspected},
        "moments": {"p": mom.p, "q": mom.q, "bounded": mom.bounded,
                    "exponent_condition": mom.exponent_condition, "admissible": mom.admissible,
                    "convention": mom.convention},
        "temperedness": {"eps_grid": tmp.eps_grid, "limsup_proxy": tmp.limsup_proxy,
                         "tempered_suspected": tmp.tempered_suspected},
    }))
    return None, files


def _sigma(cfg, p, ctx):
    S = effective_sigma(cfg.environment, p["r"], p["tol"], p["boundary"])
    doc = {"sigma": S.matrix, "eigenvalues": S.eigenvalues(), "r": S.r, "boundary": S.boundary,
           "tol": S.tol, "quadratic_values": S.quadratic_values}
    d = len(S.matrix)
    files = [io.write_json(ctx.out / "sigma.json", doc),
             io.write_csv(ctx.out / "sigma.csv", ["i", "j", "sigma"],
                          [[i + 1, j + 1, S.matrix[i, j]] for i in range(d) for j in range(d)])]
    return None, files


def _sigma_scan(cfg, p, ctx):
    rows, mats = [], []
    for r in p["radii"]:
        S = effective_sigma(cfg.environment, r, p["tol"], p["boundary"]).matrix
        mats.append(S)
        d = len(S)
        rows += [[r, i + 1, j + 1, S[i, j]] for i in range(d) for j in range(d)]
    files = [io.write_csv(ctx.out / "sigma_scan.csv", ["r", "i", "j", "sigma"], rows),
             io.write_json(ctx.out / "sigma_scan.json", {"radii": p["radii"], "sigma": mats})]
    return None, files


def _corrector_1d(cfg, p, ctx):
    cor = corrector_1d(cfg.environment, p["n"], p["r_norm"], p["ms"])
    x = np.arange(-cor.n, cor.n + 1)
    ms = sorted(cor.sublinearity)
    prof = [cor.sublinearity[m] for m in ms]
    files = [
        io.write_csv(ctx.out / "psi.csv", ["x", "psi"], zip(x, cor.psi)),
        io.write_csv(ctx.out / "sublinearity.csv", ["m", "max_dev_over_m"], zip(ms, prof)),
        io.write_json(ctx.out / "corrector_1d.json", {"a": cor.a, "n": cor.n,
                                                     "sublinearity": cor.sublinearity}),
    ]
    return None, files


def _chi(cfg, p, ctx):
    chi = chi_eps(cfg.environment, p["r"], p["epsilon"], p["tol"])
    files = [io.write_field_csv(ctx.out / "chi.csv", chi.field),
             io.write_json(ctx.out / "chi.json", {**chi.meta(), "residual": chi.residual,
                                                  "iterations": chi.report.iterations,
                                                  "max_residual": p["max_residual"]})]
    return bool(chi.residual <= p["max_residual"]), files


def _theta(cfg, p, ctx):
    env = cfg.environment
    chi = chi_eps(env, p["r"], p["epsilon"], p["tol"])
    th = theta(env, p["r"], p["epsilon"], chi, p["tol"])
    defect = harmonic_defect(env, chi, th)
    worst = float(np.abs(defect).max())
    th.field.meta.update({"epsilon": th.epsilon, "r": th.r})
    files = [io.write_field_csv(ctx.out / "theta.csv", th.field),
             io.write_json(ctx.out / "theta.json", {"r": th.r, "epsilon": th.epsilon,
                                                    "theta_residual": th.residual,
                                                    "chi_residual": chi.residual,
                                                    "harmonic_defect": worst,
                                                    "max_defect": p["max_defect"]})]
    return bool(worst <= p["max_defect"]), files


def _dirichlet(cfg, p, ctx):
    v = _direction(cfg.environment.d, p["direction"])
    res = dirichlet_energy(cfg.environment, p["r"], v, p["tol"], p["normalize"])
    res.minimizer.meta.update({"r": res.r, "direction": list(v.vector)})
    files = [io.write_field_csv(ctx.out / "minimizer.csv", res.minimizer),
             io.write_json(ctx.out / "dirichlet.json", {
                 "r": res.r, "energy": res.value, "normalized": res.normalized,
                 "normalization": res.normalization, "unminimized": res.unminimized,
                 "edge_weight": res.edge_weight, "iterations": res.report.iterations})]
    return None, files


def _lemma35(cfg, p, ctx):
    v = _direction(cfg.environment.d, p["direction"])
    rows = []
    for r in p["r"]:
        res = lemma35_check(cfg.environment, r, v, p["tol"])
        rows.append([r, res.lhs, res.rhs, res.gap])
    passed = all(row[3] <= p["max_gap"] for row in rows)
    files = [io.write_csv(ctx.out / "lemma35.csv", ["r", "quadratic_form", "energy_side", "gap"],
                          rows),
             io.write_json(ctx.out / "lemma35.json", {"max_gap": p["max_gap"], "passed": passed,
                                                      "gaps": [row[3] for row in rows]})]
    return passed, files


def _exp_config(cfg, p, ctx, **extra) -> ExperimentConfig:
    return ExperimentConfig(cfg.environment, n=p.get("n", 1), M=p["M"], seed_base=ctx.seed,
                            workers=ctx.workers, env_spec=cfg.environment_spec, **extra)


def _write_report(rep, ctx, p):
    params = {**p, "seed_base": ctx.seed, "environment": ctx.cfg.environment_spec}
    return list(rep.write(ctx.out, params))


def _iip(cfg, p, ctx):
    ec = _exp_config(cfg, p, ctx, r=p["r"], r_norm=p["r_norm"], z_max=p["z_max"],
                     min_replicas=p["min_replicas"])
    rep = iip_experiment(ec)
    if rep.warning:
        print(f"warning: {rep.warning}", file=sys.stderr)
    return rep.passed, _write_report(rep, ctx, p)


def _ergodic(cfg, p, ctx):
    f = observable(p["observable"])
    if p["cap"] is not None:
        f = f.capped(p["cap"])
    ec = _exp_config(cfg, p, ctx, r_norm=p["r_norm"], z_time=p["z_time"])
    rep = ergodic_average_experiment(ec, f)
    return rep.passed, _write_report(rep, ctx, p)


def _conversion(cfg, p, ctx):
    ec = _exp_config(cfg, {**p, "n": max(p["n_list"])}, ctx, r_norm=p["r_norm"])
    rep = conversion_check(ec, observable(p["observable"]), p["n_list"],
                           ratio_bounds=(p["ratio_low"], p["ratio_high"]))
    return rep.bounded, _write_report(rep, ctx, p)


def _exit_tail(cfg, p, ctx):
    rep = exit_tail_experiment(cfg.environment, p["R_list"], p["sigma"], p["t_grid"], p["M"],
                               p["alpha_target"], ctx.seed, p["slack"], workers=ctx.workers)
    return rep.passed, _write_report(rep, ctx, p)


def _oscillation(cfg, p, ctx):
    rep = oscillation_experiment(cfg.environment, p["n_list"], p["T"], p["delta_list"],
                                 p["eps"], p["M"], ctx.seed, ctx.workers)
    return rep.monotone, _write_report(rep, ctx, p)


def _lln(cfg, p, ctx):
    rep = lln_experiment(cfg.environment, p["n_list"], p["M"], p["delta"], ctx.seed, ctx.workers)
    return rep.decreasing, _write_report(rep, ctx, p)


def _heat_kernel(cfg, p, ctx):
    rep = heat_kernel_experiment(cfg.environment, p["t_list"], p["M"], ctx.seed, p["slack"],
                                 ctx.workers)
    return rep.passed, _write_report(rep, ctx, p)


HANDLERS = {
    "env-report": _env_report, "sigma": _sigma, "sigma-scan": _sigma_scan,
    "corrector-1d": _corrector_1d, "chi": _chi, "theta": _theta, "dirichlet": _dirichlet,
    "lemma35": _lemma35, "iip": _iip, "ergodic-avg": _ergodic, "conversion": _conversion,
    "exit-tail": _exit_tail, "oscillation": _oscillation, "lln": _lln,
    "heat-kernel": _heat_kernel,
}


@dataclass
class _Context:
    cfg: RunConfig
    seed: int
    workers: int
    out: Path


def output_root(cli_out: str | None, cfg: RunConfig) -> Path:
    return Path(cli_out or os.environ.get(OUT_ENV_VAR) or cfg.run["out"] or "condwalk-out")


def run(subcommand: str, config: str, overrides: dict | None = None, *, seed: int | None = None,
        workers: int | None = None, out: str | None = None) -> int:
    """Run one subcommand; returns the process exit status."""
    if subcommand not in HANDLERS:
        print(f"error: unknown subcommand {subcommand!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load(config, overrides)
        params = cfg.operation(subcommand)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    seed = cfg.run["seed"] if seed is None else int(seed)
    workers = workers or cfg.run["workers"] or os.cpu_count() or 1
    out_dir = output_root(out, cfg) / subcommand
    manifest = RunManifest(subcommand, cfg.path, params, seed, workers, str(out_dir))
    manifest_path = out_dir / "manifest.json"
    io.write_json(manifest_path, manifest.doc(cfg))
    ctx = _Context(cfg, seed, workers, out_dir)
    try:
        passed, files = HANDLERS[subcommand](cfg, params, ctx)
        code = EXIT_FAILED if passed is False else EXIT_OK
        manifest.status = "passed" if passed else ("failed" if passed is False else "done")
        manifest.passed = passed
        manifest.outputs = [str(f) for f in files]
    except (ConfigError, ValueError) as exc:
        code, manifest.status, manifest.error = EXIT_USAGE, "error", str(exc)
        print(f"error: {exc}", file=sys.stderr)
    except Exception as exc:  # crash: leave a diagnosable manifest behind
        code, manifest.status = EXIT_USAGE, "crashed"
        manifest.error = "".join(traceback.format_exception(exc))
        print(manifest.error, file=sys.stderr)
    manifest.exit_code = code
    manifest.finished = time.time()
    io.write_json(manifest_path, manifest.doc(cfg))
    print(f"{subcommand}: {manifest.status} -> {out_dir}")
    return code


# validation -------------------------------------------------------------------


def _cost_rows(cfg: RunConfig) -> list:
    d = cfg.environment.d
    rows = []
    for name, p in sorted(cfg.operations.items()):
        radii = p.get("radii") or ([p["r"]] if isinstance(p.get("r"), int) else p.get("r")) or []
        sites = sum((2 * r + 1) ** d for r in radii) if radii else 0
        if name == "corrector-1d":
            sites = 2 * p["n"] + 1
        M = p.get("M", 0)
        if "n" in p:
            steps = p["n"] * M
        elif "n_list" in p:
            steps = sum(p["n_list"]) * M * (1 if name != "oscillation" else p["T"])
        elif "R_list" in p:
            steps = 9 * M * sum(int(max(p["t_grid"]) * R * R) for R in p["R_list"])
        elif "t_list" in p:
            steps = int(sum(p["t_list"]) * M)
        else:
            steps = 0
        rows.append({"operation": name, "sites": sites, "steps": int(steps), "replicas": M})
    return rows


def validate(config: str, overrides: dict | None = None) -> int:
    """Schema check, moment-class preview and cost estimate; runs nothing heavy."""
    try:
        cfg = load(config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    p, q, d = cfg.moments["p"], cfg.moments["q"], cfg.environment.d
    mom = moment_report(cfg.environment, p, q, cfg.moments["r_max"])
    print("ok")
    print(f"environment: {cfg.environment!r}")
    lhs = 1.0 / p + 1.0 / q
    print(f"moments: p={p:g} q={q:g} d={d} bounded={mom.bounded} "
          f"exponent_condition={mom.exponent_condition} admissible={mom.admissible}")
    if not mom.exponent_condition:
        if d >= 2:
            print(f"warning: moment exponents violate 1/p + 1/q < 2/d "
                  f"(1/p + 1/q = {lhs:g}, 2/d = {2.0 / d:g})")
        else:
            print("warning: moment exponents need p > 1 and q > 1")
    rows = _cost_rows(cfg)
    if rows:
        print(f"{'operation':<14}{'sites':>12}{'steps':>16}{'replicas':>10}")
        for r in rows:
            print(f"{r['operation']:<14}{r['sites']:>12}{r['steps']:>16}{r['replicas']:>10}")
    return EXIT_OK


# argument parsing ---------------------------------------------------------------


def _parse_overrides(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        out[key.strip()] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="condwalk",
        description="Homogenization experiments for random walks among conductances.")
    parser.add_argument("subcommand", choices=SUBCOMMANDS + ("validate",))
    parser.add_argument("config", help="INI path or bundled config name")
    parser.add_argument("--seed", type=int, default=None, help="seed base (decimal 64-bit)")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker threads (default: all cores; results do not depend on it)")
    parser.add_argument("--out", default=None, help=f"output root (overrides ${OUT_ENV_VAR})")
    parser.add_argument("--set", dest="overrides", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a config value; repeatable")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; map to 1
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        overrides = _parse_overrides(args.overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.subcommand == "validate":
        return validate(args.config, overrides)
    return run(args.subcommand, args.config, overrides, seed=args.seed, workers=args.workers,
               out=args.out)


if __name__ == "__main__":
    sys.exit(main())
