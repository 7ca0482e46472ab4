"""Discrete- and continuous-time random walk among conductances.

Randomness is counter based: the uniform driving step ``k`` of the walk with
seed ``s`` is a pure function of ``(s, k)``.  Neighbours are picked by inverse
CDF over the fixed order ``+e_1, -e_1, ..., +e_d, -e_d``.  The continuous-time
walk uses the same jump uniforms plus an independent stream of exponential
holding times, so it is exactly a time change of the discrete walk with the
same seed.

Batch simulation materializes conductances on a box around the origin and
doubles the box whenever a walker reaches its edge; since environments are
pure functions this never changes a trajectory.
"""
from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from ._hashing import as_seed, stream_uniform, uniform_array
from .environments import Environment, LocalObservable, block_average, box_sites, pi_observable

JUMP_STREAM = 0
CLOCK_STREAM = 1
DEFAULT_EXIT_CAP = 10**8

# status codes returned by the kernels
_DONE, _EXITED, _GROW = 0, 1, 2


@njit(nogil=True, cache=True)
def _advance(cond, R, strides, pos, k, n_end, seed, fvals, acc, exit_r, exit_c, path):
    """Run one walker from step ``k`` towards ``n_end``.

    ``acc[0]`` accumulates ``fvals`` at ``X_k`` before each step.  Returns the
    new step count and a status code.
    """
    d = pos.shape[0]
    w = np.empty(2 * d)
    while True:
        if exit_r >= 0:
            for j in range(d):
                if abs(pos[j] - exit_c[j]) > exit_r:
                    return k, 1
        if k >= n_end:
            return k, 0
        flat = 0
        for j in range(d):
            if abs(pos[j]) >= R:
                return k, 2
            flat += (pos[j] + R) * strides[j]
        if fvals.shape[0] > 0:
            acc[0] += fvals[flat]
        total = 0.0
        for j in range(d):
            w[2 * j] = cond[j, flat]
            w[2 * j + 1] = cond[j, flat - strides[j]]
            total += w[2 * j] + w[2 * j + 1]
        u = stream_uniform(seed, np.uint64(k), np.uint64(0)) * total
        choice = 2 * d - 1
        run = 0.0
        for m in range(2 * d):
            run += w[m]
            if u < run:
                choice = m
                break
        if choice % 2 == 0:
            pos[choice // 2] += 1
        else:
            pos[choice // 2] -= 1
        k += 1
        if path.shape[0] > 0:
            for j in range(d):
                path[k, j] = pos[j]


@njit(nogil=True, cache=True)
def _advance_ct(cond, R, strides, pos, k, t, t_max, seed, times):
    """Continuous-time walker: jump ``k`` happens after an Exp(1) holding time."""
    d = pos.shape[0]
    w = np.empty(2 * d)
    while True:
        hold = -math.log1p(-stream_uniform(seed, np.uint64(k), np.uint64(1)))
        if t + hold > t_max:
            return k, t, 0
        flat = 0
        for j in range(d):
            if abs(pos[j]) >= R:
                return k, t, 2
            flat += (pos[j] + R) * strides[j]
        t += hold
        total = 0.0
        for j in range(d):
            w[2 * j] = cond[j, flat]
            w[2 * j + 1] = cond[j, flat - strides[j]]
            total += w[2 * j] + w[2 * j + 1]
        u = stream_uniform(seed, np.uint64(k), np.uint64(0)) * total
        choice = 2 * d - 1
        run = 0.0
        for m in range(2 * d):
            run += w[m]
            if u < run:
                choice = m
                break
        if choice % 2 == 0:
            pos[choice // 2] += 1
        else:
            pos[choice // 2] -= 1
        if times.shape[0] > k:
            times[k] = t
        k += 1


class _Tile:
    """Conductances of the box ``[-R, R]^d`` laid out for the kernels."""

    def __init__(self, env: Environment, R: int, observable: LocalObservable | None = None):
        self.env, self.R, self.observable = env, int(R), observable
        d = env.d
        side = 2 * self.R + 1
        sites = box_sites(d, -self.R, self.R)
        self.strides = side ** np.arange(d - 1, -1, -1, dtype=np.int64)
        self.cond = np.ascontiguousarray(np.stack([env.values(sites, i) for i in range(d)]))
        if observable is None:
            self.fvals = np.empty(0)
        else:
            self.fvals = np.ascontiguousarray(observable.at(env, sites))

    def grown(self, needed: int) -> "_Tile":
        R = self.R
        while R <= needed:
            R *= 2
        return _Tile(self.env, R, self.observable)


def _initial_radius(d: int, scale: float, x0) -> int:
    return int(max(16, 6 * math.sqrt(max(scale, 1.0))) + np.abs(x0).max() + 2)


# ---------------------------------------------------------------------------
# single-path API


@dataclass
class WalkPath:
    start: tuple
    positions: np.ndarray  # (n+1, d)
    seed: int
    event_times: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.positions) - 1

    @property
    def d(self) -> int:
        return self.positions.shape[1]


def step_distribution(env: Environment, x) -> list:
    """Neighbours of ``x`` with probabilities ``c(x, y) / pi(x)``, in kernel order."""
    x = np.asarray(x, dtype=np.int64).reshape(1, env.d)
    nbrs, weights = [], []
    for i in range(env.d):
        back = x.copy()
        back[0, i] -= 1
        fwd = x.copy()
        fwd[0, i] += 1
        nbrs += [tuple(int(v) for v in fwd[0]), tuple(int(v) for v in back[0])]
        weights += [env.values(x, i)[0], env.values(back, i)[0]]
    w = np.asarray(weights)
    return list(zip(nbrs, (w / w.sum()).tolist()))


def local_drift_at(env: Environment, sites) -> np.ndarray:
    """``V(tau_x omega) = sum_y P(x, y)(y - x)`` for an (N, d) array of sites."""
    sites = np.asarray(sites, dtype=np.int64).reshape(-1, env.d)
    fwd = np.stack([env.values(sites, i) for i in range(env.d)], axis=1)
    bwd = np.empty_like(fwd)
    for i in range(env.d):
        back = sites.copy()
        back[:, i] -= 1
        bwd[:, i] = env.values(back, i)
    return (fwd - bwd) / (fwd.sum(axis=1) + bwd.sum(axis=1))[:, None]


def local_drift(env: Environment, x) -> np.ndarray:
    return local_drift_at(env, np.asarray(x).reshape(1, env.d))[0]


def simulate(env: Environment, x0, n: int, seed: int) -> WalkPath:
    """Trajectory ``X_0 = x0, ..., X_n``; bit-reproducible from ``(env, x0, n, seed)``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    x0 = np.asarray(x0, dtype=np.int64).reshape(env.d)
    path = np.empty((n + 1, env.d), dtype=np.int64)
    path[0] = x0
    tile = _Tile(env, _initial_radius(env.d, n, x0))
    pos, k = x0.copy(), 0
    key = as_seed(seed)
    none = np.empty(0)
    while True:
        k, status = _advance(tile.cond, tile.R, tile.strides, pos, k, n, key, none,
                             np.zeros(1), -1, pos, path)
        if status == _DONE:
            break
        tile = tile.grown(int(np.abs(pos).max()) + 1)
    return WalkPath(tuple(int(v) for v in x0), path, int(seed))


def simulate_ct(env: Environment, x0, t_max: float, seed: int) -> WalkPath:
    """Constant-speed continuous-time walk ``Y_t = X_{N(t)}`` up to ``t_max``.

    ``event_times[k]`` is the time of jump ``k + 1``; the number of jumps
    ``N(t_max)`` equals ``len(event_times)``.
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    x0 = np.asarray(x0, dtype=np.int64).reshape(env.d)
    key = as_seed(seed)
    chunk = int(t_max + 10 * math.sqrt(t_max) + 64)
    holds = np.empty(0)
    while True:
        k = np.arange(len(holds), len(holds) + chunk, dtype=np.int64)
        holds = np.concatenate([holds, -np.log1p(-uniform_array(key, k, CLOCK_STREAM))])
        # sequential sum, the same order as the batch kernel
        times = np.cumsum(holds)
        if times[-1] > t_max:
            break
    times = times[times <= t_max]
    discrete = simulate(env, x0, len(times), seed)
    return WalkPath(discrete.start, discrete.positions, int(seed), times)


@dataclass
class RescaledPath:
    """``B^{(n)}_t = n^{-1/2}(X_{[tn]} + (tn - [tn])(X_{[tn]+1} - X_{[tn]}))``."""

    n: int
    breakpoints: np.ndarray  # X_k / sqrt(n), k = 0..len-1

    @property
    def t_max(self) -> float:
        return (len(self.breakpoints) - 1) / self.n

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.t_max + 1e-12):
            raise ValueError(f"t outside the path coverage [0, {self.t_max}]")
        s = t * self.n
        k = np.minimum(np.floor(s).astype(np.int64), len(self.breakpoints) - 1)
        frac = (s - k)[..., None]
        nxt = np.minimum(k + 1, len(self.breakpoints) - 1)
        return self.breakpoints[k] + frac * (self.breakpoints[nxt] - self.breakpoints[k])

    def oscillation(self, T: float, delta: float) -> float:
        """``sup_{|t-s| < delta, s,t in [0,T]} |B_t - B_s|_inf``.

        Extremes of a piecewise-linear path over a sliding window are attained
        at breakpoints or at window ends placed on breakpoints, so the sup is
        computed over windows anchored at the breakpoints.
        """
        kmax = int(math.floor(T * self.n + 1e-9))
        if kmax > len(self.breakpoints) - 1:
            raise ValueError("T beyond path coverage")
        return oscillation(self.breakpoints[: kmax + 1], delta * self.n)


@njit(cache=True)
def _osc_1d(x, w):
    m = x.shape[0]
    L = int(math.floor(w))
    frac = w - L
    if L >= m - 1:
        return x.max() - x.min()
    # sliding max/min over breakpoint windows [a, a + L] (monotone deques)
    size = m - L
    wmax = np.empty(size)
    wmin = np.empty(size)
    qmax = np.empty(m, dtype=np.int64)
    qmin = np.empty(m, dtype=np.int64)
    hmax = tmax = hmin = tmin = 0
    for i in range(m):
        while tmax > hmax and x[qmax[tmax - 1]] <= x[i]:
            tmax -= 1
        qmax[tmax] = i
        tmax += 1
        while tmin > hmin and x[qmin[tmin - 1]] >= x[i]:
            tmin -= 1
        qmin[tmin] = i
        tmin += 1
        a = i - L
        if a >= 0:
            while qmax[hmax] < a:
                hmax += 1
            while qmin[hmin] < a:
                hmin += 1
            wmax[a] = x[qmax[hmax]]
            wmin[a] = x[qmin[hmin]]
    best = 0.0
    for a in range(size):
        hi = wmax[a]
        lo = wmin[a]
        if frac > 0.0:
            # window [a, a + w]: add the interpolated right end
            if a + L + 1 < m:
                e = x[a + L] + frac * (x[a + L + 1] - x[a + L])
                best = max(best, max(hi, e) - min(lo, e))
            # window [b - w, b] with b = a + L: add the interpolated left end
            if a >= 1:
                e = x[a - 1] + (1.0 - frac) * (x[a] - x[a - 1])
                best = max(best, max(hi, e) - min(lo, e))
        best = max(best, hi - lo)
    return best


def oscillation(points: np.ndarray, width: float) -> float:
    """Sup-norm oscillation of the linear interpolation of ``points`` (unit
    parameter spacing) over parameter windows of length ``width``.

    The sup over a window is attained with one window end on a breakpoint, so
    windows anchored at breakpoints on either side are enough.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(pts) < 2 or width <= 0:
        return 0.0
    return max(_osc_1d(np.ascontiguousarray(pts[:, j]), float(width)) for j in range(pts.shape[1]))


def rescale(path: WalkPath, n: int) -> RescaledPath:
    if n < 1 or path.n < n:
        raise ValueError("path must contain at least n steps")
    return RescaledPath(int(n), path.positions / math.sqrt(n))


# ---------------------------------------------------------------------------
# exit times and averages


@dataclass(frozen=True)
class Box:
    """``center + [-radius, radius]^d``."""

    center: tuple
    radius: int

    def contains(self, x) -> bool:
        return bool(np.all(np.abs(np.asarray(x) - np.asarray(self.center)) <= self.radius))


@dataclass
class ExitResult:
    H: int | None
    position: tuple | None
    censored: bool


def exit_time(env: Environment, x0, window, seed: int, cap: int = DEFAULT_EXIT_CAP) -> ExitResult:
    """First ``k`` with ``X_k`` outside the box ``window`` (a :class:`Box` or radius
    about the origin), censored after ``cap`` steps."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if not isinstance(window, Box):
        window = Box((0,) * env.d, int(window))
    res = run_batch(env, x0, cap, [seed], exit_box=window)
    if res.exited[0]:
        return ExitResult(int(res.steps[0]), tuple(int(v) for v in res.final[0]), False)
    return ExitResult(None, None, True)


def time_average_env(env: Environment, path: WalkPath, f: LocalObservable) -> float:
    """``(1/n) sum_{k<n} f(tau_{X_k} omega)`` along the path."""
    if path.n == 0:
        raise ValueError("path has no steps")
    return math.fsum(f.at(env, path.positions[:-1])) / path.n


def predicted_time_average(env: Environment, f: LocalObservable, r: int,
                           half_open: bool = False) -> float:
    """pi-weighted spatial average ``block_avg(pi f) / block_avg(pi)``."""
    pi_f = pi_observable()
    return (block_average(env, pi_f * f, r, half_open) / block_average(env, pi_f, r, half_open))


# ---------------------------------------------------------------------------
# batches


@dataclass
class BatchResult:
    seeds: np.ndarray
    final: np.ndarray  # (M, d) positions at the end (or at exit)
    steps: np.ndarray  # (M,) steps taken (exit time when exited)
    exited: np.ndarray  # (M,) bool
    fsum: np.ndarray  # (M,) accumulated observable
    paths: np.ndarray | None = None  # (M, n+1, d)
    times: np.ndarray | None = None  # (M,) clock at the end for continuous time


def _chunks(m: int, workers: int):
    workers = max(1, int(workers))
    bounds = np.linspace(0, m, workers + 1).astype(int)
    return [(bounds[i], bounds[i + 1]) for i in range(workers) if bounds[i] < bounds[i + 1]]


def run_batch(env: Environment, x0, n: int, seeds: Sequence[int], *, observable=None,
              exit_box: Box | None = None, record_paths: bool = False,
              workers: int = 1) -> BatchResult:
    """Run one discrete walk per seed for ``n`` steps (or until ``exit_box`` is left).

    Results depend only on the seeds, never on ``workers``.
    """
    d = env.d
    x0 = np.asarray(x0, dtype=np.int64).reshape(d)
    seeds = np.asarray([int(s) for s in seeds], dtype=object)
    m = len(seeds)
    scale = n if exit_box is None else min(n, (exit_box.radius + 1) ** 2 * 4)
    R0 = _initial_radius(d, scale, x0)
    if exit_box is not None:
        R0 = max(R0, int(np.abs(exit_box.center).max()) + exit_box.radius + 3)
    tile = _Tile(env, R0, observable)
    pos = np.tile(x0, (m, 1))
    steps = np.zeros(m, dtype=np.int64)
    status = np.full(m, -1)
    acc = np.zeros((m, 1))
    paths = np.empty((m, n + 1, d), dtype=np.int64) if record_paths else None
    if record_paths:
        paths[:, 0] = x0
    exit_r = -1 if exit_box is None else int(exit_box.radius)
    exit_c = x0 if exit_box is None else np.asarray(exit_box.center, dtype=np.int64)
    keys = [as_seed(s) for s in seeds]
    empty_path = np.empty((0, d), dtype=np.int64)

    def work(lo_hi, tile):
        lo, hi = lo_hi
        for i in range(lo, hi):
            if status[i] in (_DONE, _EXITED):
                continue
            p = paths[i] if record_paths else empty_path
            steps[i], status[i] = _advance(tile.cond, tile.R, tile.strides, pos[i], steps[i], n,
                                           keys[i], tile.fvals, acc[i], exit_r, exit_c, p)

    while True:
        chunks = _chunks(m, workers)
        if len(chunks) > 1:
            with ThreadPoolExecutor(len(chunks)) as pool:
                list(pool.map(lambda c: work(c, tile), chunks))
        else:
            for c in chunks:
                work(c, tile)
        pending = status == _GROW
        if not pending.any():
            break
        tile = tile.grown(int(np.abs(pos[pending]).max()) + 1)
    return BatchResult(np.asarray([int(s) for s in seeds]), pos, steps, status == _EXITED,
                       acc[:, 0], paths)


def run_batch_ct(env: Environment, x0, t_max: float, seeds: Sequence[int],
                 workers: int = 1) -> BatchResult:
    """Continuous-time walks up to ``t_max``; ``steps`` holds ``N(t_max)``."""
    d = env.d
    x0 = np.asarray(x0, dtype=np.int64).reshape(d)
    m = len(seeds)
    tile = _Tile(env, _initial_radius(d, t_max, x0))
    pos = np.tile(x0, (m, 1))
    steps = np.zeros(m, dtype=np.int64)
    clock = np.zeros(m)
    status = np.full(m, -1)
    keys = [as_seed(s) for s in seeds]
    none = np.empty(0)

    def work(lo_hi, tile):
        lo, hi = lo_hi
        for i in range(lo, hi):
            if status[i] == _DONE:
                continue
            steps[i], clock[i], status[i] = _advance_ct(tile.cond, tile.R, tile.strides, pos[i],
                                                        steps[i], clock[i], t_max, keys[i], none)

    while True:
        chunks = _chunks(m, workers)
        if len(chunks) > 1:
            with ThreadPoolExecutor(len(chunks)) as pool:
                list(pool.map(lambda c: work(c, tile), chunks))
        else:
            for c in chunks:
                work(c, tile)
        pending = status == _GROW
        if not pending.any():
            break
        tile = tile.grown(int(np.abs(pos[pending]).max()) + 1)
    return BatchResult(np.asarray([int(s) for s in seeds]), pos, steps, np.zeros(m, bool),
                       np.zeros(m), None, clock)


# ---------------------------------------------------------------------------
# trajectory dumps

_TRAJ_MAGIC = b"CWTR"


def dump_path(path: WalkPath, fh) -> None:
    """Binary record: magic, d, seed, n, x0, then one byte per step (2*axis + sign)."""
    steps = np.diff(path.positions, axis=0)
    axis = np.argmax(np.abs(steps), axis=1)
    sign = (steps[np.arange(len(steps)), axis] < 0).astype(np.uint8)
    codes = (2 * axis + sign).astype(np.uint8)
    fh.write(_TRAJ_MAGIC)
    fh.write(struct.pack("<BQQ", path.d, int(path.seed) & (2**64 - 1), path.n))
    fh.write(struct.pack(f"<{path.d}q", *path.start))
    fh.write(codes.tobytes())


def load_path(fh) -> WalkPath:
    if fh.read(4) != _TRAJ_MAGIC:
        raise ValueError("not a trajectory dump")
    d, seed, n = struct.unpack("<BQQ", fh.read(17))
    start = np.asarray(struct.unpack(f"<{d}q", fh.read(8 * d)), dtype=np.int64)
    codes = np.frombuffer(fh.read(n), dtype=np.uint8)
    moves = np.zeros((n, d), dtype=np.int64)
    moves[np.arange(n), codes // 2] = np.where(codes % 2 == 0, 1, -1)
    positions = np.concatenate([start[None], start + np.cumsum(moves, axis=0)])
    return WalkPath(tuple(int(v) for v in start), positions, int(seed))
