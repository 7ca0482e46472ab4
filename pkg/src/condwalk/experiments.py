"""Monte Carlo experiments comparing walks with homogenization predictions.

Every experiment derives replica seeds as ``seed_base + i`` and reduces in
replica order, so reports are bit-reproducible and independent of the
worker count.  Reports carry sample sizes and standard errors; ``write``
stores one CSV with the data and one JSON summary.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io
from .environments import Environment, LocalObservable, block_average, pi_observable
from .homogenize import effective_sigma, sigma_1d_exact
from .walk import Box, predicted_time_average, run_batch, run_batch_ct


@dataclass
class ExperimentConfig:
    env: Environment
    n: int = 1000
    M: int = 1000
    seed_base: int = 0
    t_max: float | None = None
    r: int = 32  # window radius for Sigma / spatial predictions
    r_norm: int = 10**5  # block radius for one-dimensional normalizations
    z_max: float = 4.0
    z_time: float = 3.0
    slope_slack: float = 0.3
    min_replicas: int = 30
    workers: int = 1
    env_spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.M < 1 or self.n < 1:
            raise ValueError("need M >= 1 and n >= 1")

    @property
    def seeds(self) -> np.ndarray:
        return self.seed_base + np.arange(self.M, dtype=np.int64)

    @property
    def r_space(self) -> int:
        """Block radius for spatial averages: ``r_norm`` in d=1, ``r`` otherwise."""
        return self.r_norm if self.env.d == 1 else self.r

    def params(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k not in ("env",)}
        out["environment"] = out.pop("env_spec") or repr(self.env)
        return out


class Report:
    name = "experiment"
    header: list = []

    def rows(self):
        return []

    def summary(self) -> dict:
        return {}

    def write(self, out_dir, params: dict | None = None) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        csv_path = io.write_csv(out_dir / f"{self.name}.csv", self.header, self.rows())
        doc = {"experiment": self.name, "summary": self.summary(), "parameters": params or {},
               "config_hash": io.config_hash(params or {})}
        json_path = io.write_json(out_dir / f"{self.name}.json", doc)
        return csv_path, json_path


def wilson_interval(k: int, m: int, z: float = 1.96) -> tuple[float, float]:
    if m == 0:
        return 0.0, 1.0
    p = k / m
    den = 1 + z * z / m
    mid = (p + z * z / (2 * m)) / den
    half = z * math.sqrt(p * (1 - p) / m + z * z / (4 * m * m)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def _fit_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) < 2:
        return math.nan
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------------------
# invariance principle


@dataclass
class IipReport(Report):
    n: int
    M: int
    empirical: np.ndarray
    predicted: np.ndarray
    drift: float
    se: np.ndarray
    z: np.ndarray
    passed: bool | None
    warning: str = ""
    name = "iip"
    header = ["i", "j", "empirical", "predicted", "se", "z"]

    def rows(self):
        d = len(self.predicted)
        for i in range(d):
            for j in range(d):
                yield [i + 1, j + 1, self.empirical[i, j], self.predicted[i, j], self.se[i, j],
                       self.z[i, j]]

    def summary(self):
        return {"n": self.n, "M": self.M, "drift": self.drift, "passed": self.passed,
                "max_abs_z": float(np.nanmax(np.abs(self.z))) if self.z.size else None,
                "warning": self.warning, "empirical": self.empirical, "predicted": self.predicted}


def predicted_sigma(config: ExperimentConfig) -> np.ndarray:
    env = config.env
    if env.d == 1:
        return np.array([[sigma_1d_exact(env, config.r_norm)]])
    boundary = "periodic" if env.period is not None else "dirichlet"
    r = config.r
    if boundary == "periodic":
        per = int(np.lcm.reduce(env.period))
        r = max(per, (r // per) * per)
    return effective_sigma(env, r, boundary=boundary).matrix


def iip_experiment(config: ExperimentConfig, sigma: np.ndarray | None = None) -> IipReport:
    """Empirical ``Cov(X_n) / n`` over ``M`` walks against ``Sigma``, entrywise z-tests."""
    env, n, M = config.env, config.n, config.M
    sigma = predicted_sigma(config) if sigma is None else np.asarray(sigma, float)
    res = run_batch(env, np.zeros(env.d, int), n, config.seeds, workers=config.workers)
    X = res.final.astype(float) / math.sqrt(n)
    mean = X.mean(axis=0)
    if M > 1:
        emp = np.cov(X, rowvar=False, ddof=1).reshape(env.d, env.d)
    else:
        emp = np.outer(X[0], X[0])
    # normal-theory standard errors under the predicted covariance
    se = np.sqrt((sigma**2 + np.outer(np.diag(sigma), np.diag(sigma))) / M)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, (emp - sigma) / se, 0.0)
    drift = float(np.linalg.norm(mean))
    if M < config.min_replicas:
        return IipReport(n, M, emp, sigma, drift, se, z, None,
                         f"insufficient sample: M={M} < {config.min_replicas}; pass/fail gated off")
    passed = bool(np.all(np.abs(z) <= config.z_max))
    return IipReport(n, M, emp, sigma, drift, se, z, passed)


# ---------------------------------------------------------------------------
# ergodic averages


@dataclass
class ErgodicReport(Report):
    n: int
    M: int
    mean: float
    se: float
    prediction: float
    gap: float
    l1_deviation: float
    passed: bool
    averages: np.ndarray = field(repr=False, default=None)
    name = "ergodic_average"
    header = ["replica", "seed", "time_average"]

    def __post_init__(self):
        self._seeds = None

    def rows(self):
        seeds = self._seeds if self._seeds is not None else range(len(self.averages))
        for i, (s, a) in enumerate(zip(seeds, self.averages)):
            yield [i, s, a]

    def summary(self):
        return {k: getattr(self, k) for k in
                ("n", "M", "mean", "se", "prediction", "gap", "l1_deviation", "passed")}


def time_averages(config: ExperimentConfig, f: LocalObservable, n: int | None = None) -> np.ndarray:
    n = config.n if n is None else n
    res = run_batch(config.env, np.zeros(config.env.d, int), n, config.seeds, observable=f,
                    workers=config.workers)
    return res.fsum / n


def ergodic_average_experiment(config: ExperimentConfig, f: LocalObservable,
                               r_pred: int | None = None) -> ErgodicReport:
    """Time average of ``f`` along the environment chain vs the pi-weighted spatial average."""
    avgs = time_averages(config, f)
    M = len(avgs)
    mean = math.fsum(avgs) / M
    se = float(np.std(avgs, ddof=1) / math.sqrt(M)) if M > 1 else math.nan
    pred = predicted_time_average(config.env, f, r_pred or config.r_space, half_open=True)
    gap = abs(mean - pred)
    l1 = math.fsum(np.abs(avgs - pred)) / M
    tol = max(config.z_time * se, 1e-12) if math.isfinite(se) else 1e-12
    rep = ErgodicReport(config.n, M, mean, se, pred, gap, l1, bool(gap <= tol), avgs)
    rep._seeds = config.seeds
    return rep


@dataclass
class ConversionReport(Report):
    n_list: list
    time_side: list
    space_side: float
    space_side_lemma: float
    ratios: list
    bounded: bool
    ratio_bounds: tuple = (0.5, 2.0)
    name = "conversion"
    header = ["n", "time_side", "space_side", "ratio"]

    def rows(self):
        for n, t, q in zip(self.n_list, self.time_side, self.ratios):
            yield [n, t, self.space_side, q]

    def summary(self):
        return {"n_list": self.n_list, "ratios": self.ratios, "space_side": self.space_side,
                "space_side_lemma": self.space_side_lemma, "bounded": self.bounded}


def conversion_check(config: ExperimentConfig, f: LocalObservable,
                     n_list: Sequence[int] | None = None, r_space: int | None = None,
                     ratio_bounds=(0.5, 2.0)) -> ConversionReport:
    """Time averages ``(1/n) sum_k E f(X_k)`` against spatial pi-weighted averages.

    ``space_side`` is ``sum f pi / sum pi`` over ``Lambda_r``;
    ``space_side_lemma`` is ``|Lambda_r|^{-1} sum f pi``.  The ratio of the
    time side to ``space_side`` must stay within ``ratio_bounds`` for every n.
    """
    n_list = [config.n] if n_list is None else [int(n) for n in n_list]
    r = r_space or config.r_space
    weighted = block_average(config.env, pi_observable() * f, r, half_open=True)
    space = weighted / block_average(config.env, pi_observable(), r, half_open=True) if weighted else 0.0
    times = [math.fsum(time_averages(config, f, n)) / config.M for n in n_list]
    if space == 0.0:
        ratios = [math.nan if t else 0.0 for t in times]
        bounded = all(t == 0 for t in times)
    else:
        ratios = [t / space for t in times]
        bounded = all(ratio_bounds[0] <= q <= ratio_bounds[1] for q in ratios)
    return ConversionReport(n_list, times, space, weighted, ratios, bool(bounded), tuple(ratio_bounds))


# ---------------------------------------------------------------------------
# exit times and oscillations


def probe_grid(d: int, R: int) -> np.ndarray:
    """Nine probe sites ``{-R/2, 0, R/2}^2`` in the first two coordinates."""
    h = R // 2
    pts = np.zeros((9, d), dtype=np.int64)
    for k, (a, b) in enumerate((a, b) for a in (-h, 0, h) for b in (-h, 0, h)):
        pts[k, 0] = a
        pts[k, 1] = b
    return pts


@dataclass
class ExitTailReport(Report):
    R_list: list
    sigma: float
    t_grid: list  # in units of R^2
    M: int
    probabilities: dict  # R -> list of max_x P(H <= t)
    intervals: dict  # R -> list of (lo, hi)
    slope: float
    alpha_target: float
    passed: bool
    name = "exit_tail"
    header = ["R", "t_over_R2", "t", "probability", "wilson_lo", "wilson_hi"]

    def rows(self):
        for R in self.R_list:
            for tau, p, (lo, hi) in zip(self.t_grid, self.probabilities[R], self.intervals[R]):
                yield [R, tau, int(math.floor(tau * R * R)), p, lo, hi]

    def summary(self):
        return {"slope": self.slope, "alpha_target": self.alpha_target, "passed": self.passed,
                "M": self.M, "R_list": self.R_list, "sigma": self.sigma}


def exit_tail_experiment(env: Environment, R_list: Sequence[int], sigma: float,
                         t_grid: Sequence[float], M: int, alpha_target: float = 1.0,
                         seed_base: int = 0, slack: float = 0.3, p_max: float = 0.5,
                         min_count: int = 5, workers: int = 1) -> ExitTailReport:
    """Lower tail ``max_x P^x(H_{Lambda_{sigma R}(x)} <= t)`` on a 9-site probe grid.

    ``t_grid`` is in units of ``R^2``.  The log-log slope is fitted over all
    points with at least ``min_count`` exits and probability at most ``p_max``.
    """
    if env.d < 2:
        raise ValueError("exit-tail bounds are stated for d >= 2")
    t_grid = sorted(float(t) for t in t_grid)
    probs, ints, fit_x, fit_y = {}, {}, [], []
    for R in R_list:
        R = int(R)
        radius = int(math.floor(sigma * R))
        cap = int(math.floor(t_grid[-1] * R * R))
        best = np.zeros(len(t_grid), dtype=np.int64)
        for k, x in enumerate(probe_grid(env.d, R)):
            seeds = seed_base + (k * M) + np.arange(M, dtype=np.int64)
            res = run_batch(env, x, max(cap, 1), seeds, exit_box=Box(tuple(x), radius),
                            workers=workers)
            H = np.where(res.exited, res.steps, np.iinfo(np.int64).max)
            counts = np.array([(H <= math.floor(tau * R * R)).sum() for tau in t_grid])
            best = np.maximum(best, counts)
        probs[R] = (best / M).tolist()
        ints[R] = [wilson_interval(int(c), M) for c in best]
        for tau, c in zip(t_grid, best):
            if c >= min_count and c / M <= p_max:
                fit_x.append(math.log(tau))
                fit_y.append(math.log(c / M))
    slope = _fit_slope(fit_x, fit_y)
    passed = bool(np.isfinite(slope) and slope >= alpha_target - slack)
    return ExitTailReport([int(R) for R in R_list], float(sigma), t_grid, M, probs, ints, slope,
                          float(alpha_target), passed)


@dataclass
class OscillationReport(Report):
    n_list: list
    T: float
    delta_list: list
    eps: float
    M: int
    probabilities: dict  # n -> list over delta
    monotone: bool
    name = "oscillation"
    header = ["n", "delta", "probability", "wilson_lo", "wilson_hi"]

    def rows(self):
        for n in self.n_list:
            for dlt, p in zip(self.delta_list, self.probabilities[n]):
                lo, hi = wilson_interval(int(round(p * self.M)), self.M)
                yield [n, dlt, p, lo, hi]

    def summary(self):
        return {"monotone": self.monotone, "M": self.M, "eps": self.eps, "T": self.T,
                "probabilities": {str(k): v for k, v in self.probabilities.items()}}


def oscillation_experiment(env: Environment, n_list: Sequence[int], T: float,
                           delta_list: Sequence[float], eps: float, M: int,
                           seed_base: int = 0, workers: int = 1,
                           chunk: int = 256) -> OscillationReport:
    """Exceedance probabilities ``P(osc_{B^(n)}([0, T], delta) > eps)``."""
    from .walk import oscillation

    if T < 1 or not all(0 < dl < 1 for dl in delta_list):
        raise ValueError("need T >= 1 and delta in (0, 1)")
    delta_list = sorted(float(x) for x in delta_list)[::-1]
    probs = {}
    for n in n_list:
        n = int(n)
        steps = int(math.ceil(n * T))
        counts = np.zeros(len(delta_list), dtype=np.int64)
        for lo in range(0, M, chunk):
            seeds = seed_base + np.arange(lo, min(M, lo + chunk), dtype=np.int64)
            res = run_batch(env, np.zeros(env.d, int), steps, seeds, record_paths=True,
                            workers=workers)
            kmax = int(math.floor(T * n + 1e-9))
            for path in res.paths:
                pts = path[: kmax + 1] / math.sqrt(n)
                for j, dl in enumerate(delta_list):
                    if oscillation(pts, dl * n) > eps:
                        counts[j] += 1
        probs[n] = (counts / M).tolist()
    monotone = all(all(b <= a for a, b in zip(p, p[1:])) for p in probs.values())
    return OscillationReport([int(n) for n in n_list], float(T), delta_list, float(eps), M,
                             probs, bool(monotone))


@dataclass
class LlnReport(Report):
    n_list: list
    M: int
    delta: float
    exceedance: list
    intervals: list
    decreasing: bool
    name = "lln"
    header = ["n", "exceedance", "wilson_lo", "wilson_hi"]

    def rows(self):
        for n, p, (lo, hi) in zip(self.n_list, self.exceedance, self.intervals):
            yield [n, p, lo, hi]

    def summary(self):
        return {"decreasing": self.decreasing, "M": self.M, "delta": self.delta,
                "exceedance": self.exceedance}


def lln_experiment(env: Environment, n_list: Sequence[int], M: int, delta: float = 0.05,
                   seed_base: int = 0, workers: int = 1) -> LlnReport:
    """Fractions of walks with ``|X_n| / n > delta`` (Euclidean norm)."""
    n_list = [int(n) for n in n_list]
    seeds = seed_base + np.arange(M, dtype=np.int64)
    exc, ints = [], []
    for n in n_list:
        res = run_batch(env, np.zeros(env.d, int), n, seeds, workers=workers)
        k = int((np.linalg.norm(res.final, axis=1) / n > delta).sum())
        exc.append(k / M)
        ints.append(wilson_interval(k, M))
    decreasing = all(b <= a for a, b in zip(exc, exc[1:]))
    return LlnReport(n_list, M, float(delta), exc, ints, bool(decreasing))


# ---------------------------------------------------------------------------
# heat kernel


@dataclass
class HeatKernelReport(Report):
    t_list: list
    M: int
    max_ratio: list  # max_y P(Y_t = y) / pi(y)
    argmax: list
    total_mass: list
    slope: float
    passed: bool
    name = "heat_kernel"
    header = ["t", "max_ratio", "argmax", "total_mass"]

    def rows(self):
        for t, m, a, s in zip(self.t_list, self.max_ratio, self.argmax, self.total_mass):
            yield [t, m, " ".join(str(int(v)) for v in a), s]

    def summary(self):
        return {"slope": self.slope, "passed": self.passed, "M": self.M, "t_list": self.t_list}


def empirical_kernel(env: Environment, x0, t: float, M: int, seed_base: int = 0,
                     workers: int = 1):
    """Sites reached at time ``t`` and their empirical probabilities."""
    seeds = seed_base + np.arange(M, dtype=np.int64)
    res = run_batch_ct(env, x0, t, seeds, workers=workers)
    sites, counts = np.unique(res.final, axis=0, return_counts=True)
    return sites, counts / M


def heat_kernel_experiment(env: Environment, t_list: Sequence[float], M: int,
                           seed_base: int = 0, slack: float = 0.3,
                           workers: int = 1) -> HeatKernelReport:
    """On-diagonal decay of ``max_y P^0(Y_t = y) / pi(y)`` against ``t^{-d/2}``."""
    t_list = [float(t) for t in t_list]
    ratios, argmax, mass = [], [], []
    for t in t_list:
        sites, p = empirical_kernel(env, np.zeros(env.d, int), t, M, seed_base, workers)
        ratio = p / env.pi_at(sites)
        k = int(np.argmax(ratio))
        ratios.append(float(ratio[k]))
        argmax.append(sites[k].tolist())
        mass.append(math.fsum(p))
    slope = _fit_slope(np.log(t_list), np.log(ratios))
    return HeatKernelReport(t_list, M, ratios, argmax, mass, slope,
                            bool(slope <= -env.d / 2 + slack))


def kernel_symmetry(env: Environment, x, y, t: float, M: int, seed_base: int = 0):
    """``P^x(Y_t = y) / pi(y)`` and ``P^y(Y_t = x) / pi(x)`` with binomial SEs."""
    out = []
    for a, b, s in ((x, y, seed_base), (y, x, seed_base + M)):
        sites, p = empirical_kernel(env, a, t, M, s)
        hit = np.all(sites == np.asarray(b), axis=1)
        pb = float(p[hit][0]) if hit.any() else 0.0
        pi_b = float(env.pi_at(np.asarray(b).reshape(1, -1))[0])
        out.append((pb / pi_b, math.sqrt(pb * (1 - pb) / M) / pi_b))
    return out
