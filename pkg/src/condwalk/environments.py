"""Deterministic conductance environments on Z^d and spatial averaging.

An environment is an immutable value object that answers point queries
``c(x, x + e_i)`` for any edge of the infinite lattice.  Nothing is stored
globally; finite windows are materialized on demand by the vectorized
:meth:`Environment.values` method.

Axes are 0-based throughout: edge ``(x, i)`` is the unordered pair
``{x, x + e_i}`` with ``i in range(d)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from ._hashing import edge_uniforms

QUASI_K_LIMIT = 2**40


class DimensionMismatchError(ValueError):
    """An edge, site or offset does not match the environment dimension."""


class Edge(NamedTuple):
    base: tuple
    axis: int

    @classmethod
    def between(cls, x, y) -> "Edge":
        """Canonical edge for the nearest-neighbour pair ``{x, y}``."""
        x = tuple(int(v) for v in x)
        y = tuple(int(v) for v in y)
        diff = [b - a for a, b in zip(x, y)]
        if len(x) != len(y) or sorted(map(abs, diff)) != [0] * (len(x) - 1) + [1]:
            raise ValueError(f"{x} and {y} are not nearest neighbours")
        axis = next(i for i, v in enumerate(diff) if v != 0)
        return cls(x if diff[axis] == 1 else y, axis)


# ---------------------------------------------------------------------------
# lattice boxes


def box_sites(d: int, lo, hi) -> np.ndarray:
    """All sites of the box ``prod_i [lo_i, hi_i]`` in C order, shape (N, d)."""
    lo = np.broadcast_to(np.asarray(lo, dtype=np.int64), (d,))
    hi = np.broadcast_to(np.asarray(hi, dtype=np.int64), (d,))
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo, hi)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def ball_sites(d: int, r: int, half_open: bool = False) -> np.ndarray:
    """Sites of ``[-r, r]^d`` (or ``[-r, r)^d`` when ``half_open``)."""
    return box_sites(d, -r, r - 1 if half_open else r)


def window_edges(d: int, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Edges with at least one endpoint in ``[-r, r]^d``, each listed once.

    Returns ``(bases, axes)``.
    """
    bases, axes = [], []
    for i in range(d):
        lo = np.full(d, -r)
        lo[i] = -r - 1
        b = box_sites(d, lo, r)
        bases.append(b)
        axes.append(np.full(len(b), i, dtype=np.int64))
    return np.concatenate(bases), np.concatenate(axes)


# ---------------------------------------------------------------------------
# environments


class Environment:
    """Base class: a positive conductance for every edge of Z^d."""

    d: int

    def _values(self, bases: np.ndarray, axes: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def period(self) -> tuple | None:
        """Period per axis when the environment is periodic, else ``None``."""
        return None

    def values(self, bases, axes) -> np.ndarray:
        """Conductances of the edges ``(bases[k], axes[k])``."""
        bases = np.asarray(bases, dtype=np.int64)
        if bases.ndim == 1:
            bases = bases.reshape(-1, self.d)
        if bases.shape[1] != self.d:
            raise DimensionMismatchError(
                f"sites have dimension {bases.shape[1]}, environment has d={self.d}")
        axes = np.broadcast_to(np.asarray(axes, dtype=np.int64), (len(bases),))
        if axes.size and (axes.min() < 0 or axes.max() >= self.d):
            raise DimensionMismatchError(f"axis out of range for d={self.d}")
        return self._values(bases, axes)

    def conductance(self, edge: Edge) -> float:
        base, axis = edge
        if len(base) != self.d or not 0 <= axis < self.d:
            raise DimensionMismatchError(f"edge {edge!r} does not fit d={self.d}")
        return float(self.values(np.asarray([base]), [axis])[0])

    def pi_at(self, sites) -> np.ndarray:
        """``pi(x)`` for an (N, d) array of sites."""
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.d)
        total = np.zeros(len(sites))
        for i in range(self.d):
            total += self.values(sites, i)
            back = sites.copy()
            back[:, i] -= 1
            total += self.values(back, i)
        return total

    def shift(self, z) -> "Environment":
        z = _as_site(z, self.d)
        if not any(z):
            return self
        return Shifted(self, z)

    def scaled(self, factor: float) -> "Environment":
        return Scaled(self, float(factor))


def _as_site(x, d: int) -> tuple:
    x = tuple(int(v) for v in np.atleast_1d(x))
    if len(x) != d:
        raise DimensionMismatchError(f"site {x} does not have dimension {d}")
    return x


@dataclass(frozen=True, eq=False)
class Constant(Environment):
    d: int
    value: float = 1.0

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("conductance must be positive")

    @property
    def period(self):
        return (1,) * self.d

    def _values(self, bases, axes):
        return np.full(len(bases), float(self.value))


@dataclass(frozen=True, eq=False)
class Periodic(Environment):
    """Tiling of a period box: ``c(x, i) = cell[x mod period][i]``.

    ``cell`` has shape ``(*periods, d)``.
    """

    cell: np.ndarray

    def __post_init__(self):
        cell = np.array(self.cell, dtype=float)
        if cell.ndim < 2 or cell.shape[-1] != cell.ndim - 1:
            raise ValueError(f"cell must have shape (*periods, d); got {cell.shape}")
        if not np.all(cell > 0):
            raise ValueError("periodic cell has non-positive conductances")
        cell.setflags(write=False)
        object.__setattr__(self, "cell", cell)

    @classmethod
    def one_dim(cls, values: Sequence[float]) -> "Periodic":
        return cls(np.asarray(values, dtype=float).reshape(-1, 1))

    @property
    def d(self):
        return self.cell.ndim - 1

    @property
    def period(self):
        return self.cell.shape[:-1]

    def _values(self, bases, axes):
        idx = tuple(np.mod(bases[:, j], p) for j, p in enumerate(self.period))
        return self.cell[idx + (axes,)]


def _exact_floor_product(alpha: float, k: np.ndarray) -> np.ndarray:
    """``floor(alpha * k)`` for the double ``alpha`` and integers ``|k| <= 2**40``.

    Both factors are split so the four partial products are exact doubles.
    """
    a_hi = float(np.float32(alpha))
    a_lo = alpha - a_hi
    k_hi = (k >> 20) << 20
    k_lo = k - k_hi
    total = np.zeros(len(k), dtype=np.int64)
    frac = np.zeros(len(k))
    for part in (a_hi * k_hi.astype(float), a_hi * k_lo.astype(float),
                 a_lo * k_hi.astype(float), a_lo * k_lo.astype(float)):
        fl = np.floor(part)
        total += fl.astype(np.int64)
        frac += part - fl
    return total + np.floor(frac).astype(np.int64)


@dataclass(frozen=True, eq=False)
class QuasiPeriodic(Environment):
    """Irrational-rotation environment.

    Along axis ``i`` the edge from ``x`` to ``x + e_i`` has conductance
    ``high`` when ``floor(alpha_i * x_i)`` is even and ``low`` otherwise.
    """

    alphas: tuple
    low: float = 1.0
    high: float = 2.0

    def __post_init__(self):
        alphas = tuple(float(a) for a in np.atleast_1d(self.alphas))
        if not all(0 < a < 1 for a in alphas):
            raise ValueError("alphas must lie in (0, 1)")
        if not (self.low > 0 and self.high > 0):
            raise ValueError("conductance must be positive")
        object.__setattr__(self, "alphas", alphas)

    @classmethod
    def golden(cls, d: int = 1, low: float = 1.0, high: float = 2.0):
        return cls(((math.sqrt(5.0) - 1.0) / 2.0,) * d, low, high)

    @property
    def d(self):
        return len(self.alphas)

    def _values(self, bases, axes):
        k = bases[np.arange(len(bases)), axes]
        if k.size and np.abs(k).max() > QUASI_K_LIMIT:
            raise ValueError("quasiperiodic coordinate exceeds the exact-floor range 2**40")
        out = np.empty(len(k))
        for i, alpha in enumerate(self.alphas):
            sel = axes == i
            even = _exact_floor_product(alpha, k[sel]) % 2 == 0
            out[sel] = np.where(even, self.high, self.low)
        return out


@dataclass(frozen=True, eq=False)
class GrowingBlocks(Environment):
    """Alternating blocks of polynomially growing length along each axis.

    ``c(x, x + e_i) = low`` if ``|x_i|`` lies in ``[n**power, (n+1)**power)``
    with ``n`` even, ``high`` otherwise.  With ``power = 1.5`` this is the
    standard example of an averaging but non-ergodic configuration.
    """

    d: int = 1
    power: float = 1.5
    low: float = 1.0
    high: float = 2.0

    def __post_init__(self):
        if not (self.low > 0 and self.high > 0):
            raise ValueError("conductance must be positive")

    def block_index(self, k: np.ndarray) -> np.ndarray:
        ak = np.abs(np.asarray(k, dtype=np.int64))
        n = np.floor(ak.astype(float) ** (1.0 / self.power)).astype(np.int64)
        n = np.where((n + 1).astype(float) ** self.power <= ak, n + 1, n)
        n = np.where(n.astype(float) ** self.power > ak, n - 1, n)
        return n

    def _values(self, bases, axes):
        k = bases[np.arange(len(bases)), axes]
        return np.where(self.block_index(k) % 2 == 0, self.low, self.high)


# distributions for HashedIid -------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def __post_init__(self):
        if not 0 < self.low <= self.high:
            raise ValueError("uniform conductances need 0 < low <= high")

    def quantile(self, u):
        return self.low + (self.high - self.low) * u

    def __str__(self):
        return f"uniform:{self.low!r},{self.high!r}"


@dataclass(frozen=True)
class TwoPoint:
    v1: float
    v2: float
    p: float

    def __post_init__(self):
        if not (self.v1 > 0 and self.v2 > 0 and 0 <= self.p <= 1):
            raise ValueError("two-point conductances must be positive with p in [0, 1]")

    def quantile(self, u):
        return np.where(u < self.p, self.v1, self.v2)

    def __str__(self):
        return f"two-point:{self.v1!r},{self.v2!r},{self.p!r}"


@dataclass(frozen=True)
class Pareto:
    tail: float
    floor: float = 1.0

    def __post_init__(self):
        if not (self.tail > 0 and self.floor > 0):
            raise ValueError("pareto needs positive tail index and floor")

    def quantile(self, u):
        return self.floor * (1.0 - u) ** (-1.0 / self.tail)

    def __str__(self):
        return f"pareto:{self.tail!r},{self.floor!r}"


def parse_distribution(text: str):
    """Parse ``uniform:a,b``, ``two-point:v1,v2,p`` or ``pareto:tail,floor``."""
    name, _, args = text.strip().partition(":")
    try:
        vals = [float(v) for v in args.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"bad distribution parameters in {text!r}") from None
    name = name.strip().lower()
    table = {"uniform": (Uniform, 2), "two-point": (TwoPoint, 3), "pareto": (Pareto, 2)}
    if name not in table:
        raise ValueError(f"unknown distribution {name!r}; expected one of {sorted(table)}")
    cls, n = table[name]
    if len(vals) != n and not (cls is Pareto and len(vals) == 1):
        raise ValueError(f"{name} takes {n} parameters, got {len(vals)}")
    return cls(*vals)


@dataclass(frozen=True, eq=False)
class HashedIid(Environment):
    """I.i.d.-looking conductances drawn as a pure function of (seed, edge)."""

    d: int
    distribution: Uniform | TwoPoint | Pareto
    seed: int = 0

    def _values(self, bases, axes):
        u = edge_uniforms(self.seed, bases, axes)
        return np.asarray(self.distribution.quantile(u), dtype=float)


@dataclass(frozen=True)
class HyperplaneRule:
    """Selects edges whose base satisfies ``x[normal] == level``."""

    normal: int = 0
    level: int = 0

    def __call__(self, bases, axes):
        return bases[:, self.normal] == self.level


@dataclass(frozen=True, eq=False)
class Perturbed(Environment):
    """``base`` with edges selected by ``rule`` (or listed in ``overrides``) replaced."""

    base: Environment
    rule: Callable | None = None
    replacement: float | Callable = 1.0
    overrides: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if not callable(self.replacement) and not self.replacement > 0:
            raise ValueError("replacement conductance must be positive")
        clean = {}
        for edge, value in dict(self.overrides).items():
            edge = Edge(_as_site(edge[0], self.base.d), int(edge[1]))
            if not value > 0:
                raise ValueError(f"override for {edge} is not positive")
            clean[edge] = float(value)
        object.__setattr__(self, "overrides", clean)

    @property
    def d(self):
        return self.base.d

    def _values(self, bases, axes):
        out = self.base._values(bases, axes).copy()
        if self.rule is not None:
            mask = np.asarray(self.rule(bases, axes), dtype=bool)
            if mask.any():
                if callable(self.replacement):
                    vals = np.asarray(self.replacement(bases[mask], axes[mask]), dtype=float)
                    if not np.all(vals > 0):
                        raise ValueError("perturbation produced a non-positive conductance")
                    out[mask] = vals
                else:
                    out[mask] = self.replacement
        for (site, axis), value in self.overrides.items():
            hit = (axes == axis) & np.all(bases == np.asarray(site), axis=1)
            out[hit] = value
        return out


@dataclass(frozen=True, eq=False)
class Shifted(Environment):
    """``tau_z env``: queried at ``(x, i)`` it returns ``env`` at ``(x + z, i)``."""

    base: Environment
    offset: tuple

    def __post_init__(self):
        object.__setattr__(self, "offset", _as_site(self.offset, self.base.d))

    @property
    def d(self):
        return self.base.d

    @property
    def period(self):
        return self.base.period

    def _values(self, bases, axes):
        return self.base._values(bases + np.asarray(self.offset, dtype=np.int64), axes)

    def shift(self, z):
        z = _as_site(z, self.d)
        total = tuple(a + b for a, b in zip(self.offset, z))
        return self.base.shift(total)


@dataclass(frozen=True, eq=False)
class Scaled(Environment):
    """All conductances multiplied by a positive constant."""

    base: Environment
    factor: float

    def __post_init__(self):
        if not self.factor > 0:
            raise ValueError("scale factor must be positive")

    @property
    def d(self):
        return self.base.d

    @property
    def period(self):
        return self.base.period

    def _values(self, bases, axes):
        return self.factor * self.base._values(bases, axes)


# ---------------------------------------------------------------------------
# module-level operations


def conductance(env: Environment, e) -> float:
    """Conductance of an edge given as ``Edge`` or as a pair of neighbouring sites."""
    if not isinstance(e, Edge):
        e = Edge(*e) if len(e) == 2 and np.ndim(e[1]) == 0 else Edge.between(*e)
    return env.conductance(e)


def pi(env: Environment, x) -> float:
    return float(env.pi_at(np.asarray([_as_site(x, env.d)]))[0])


def shift(env: Environment, z) -> Environment:
    return env.shift(z)


# local observables ----------------------------------------------------------


class LocalObservable:
    """A function ``f(omega)`` reading conductances within ``radius`` of 0.

    ``at(env, sites)`` returns ``f(tau_x env)`` for every row ``x`` of
    ``sites`` and is vectorized for the built-in observables.
    """

    def __init__(self, at: Callable, radius: int, name: str = "f"):
        self._at = at
        self.radius = int(radius)
        self.name = name

    def at(self, env: Environment, sites) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, env.d)
        return np.asarray(self._at(env, sites), dtype=float)

    def __call__(self, env: Environment) -> float:
        return float(self.at(env, np.zeros((1, env.d), dtype=np.int64))[0])

    def map(self, g: Callable, name: str | None = None) -> "LocalObservable":
        return LocalObservable(lambda env, s: g(self.at(env, s)), self.radius,
                               name or f"g({self.name})")

    def __mul__(self, other: "LocalObservable") -> "LocalObservable":
        return LocalObservable(lambda env, s: self.at(env, s) * other.at(env, s),
                               max(self.radius, other.radius), f"{self.name}*{other.name}")

    def capped(self, level: float) -> "LocalObservable":
        return self.map(lambda v: np.minimum(v, level), f"min({self.name},{level:g})")

    def __repr__(self):
        return f"LocalObservable({self.name!r}, radius={self.radius})"

    @classmethod
    def from_function(cls, func: Callable[[Environment], float], radius: int,
                      name: str = "f") -> "LocalObservable":
        """Wrap a scalar function of the environment (evaluated site by site)."""

        def at(env, sites):
            return np.array([func(env.shift(x)) for x in sites], dtype=float)

        return cls(at, radius, name)


def edge_conductance(axis: int = 0, offset=None) -> LocalObservable:
    """``c(y, y + e_axis)`` with ``y = offset`` (the origin by default)."""

    def at(env, sites):
        base = sites if offset is None else sites + np.asarray(offset, dtype=np.int64)
        return env.values(base, axis)

    radius = 1 if offset is None else 1 + int(np.abs(offset).max())
    return LocalObservable(at, radius, f"c(0,e{axis})" if offset is None else f"c({offset},e{axis})")


def inverse_conductance(axis: int = 0, offset=None) -> LocalObservable:
    return edge_conductance(axis, offset).map(np.reciprocal, f"1/c(0,e{axis})")


def constant_observable(value: float) -> LocalObservable:
    return LocalObservable(lambda env, s: np.full(len(s), float(value)), 0, f"{value:g}")


def pi_observable() -> LocalObservable:
    return LocalObservable(lambda env, s: env.pi_at(s), 1, "pi")


def block_average(env: Environment, f: LocalObservable, r: int, half_open: bool = False) -> float:
    """``|Lambda_r|^{-1} sum_{x in Lambda_r} f(tau_x env)``.

    ``Lambda_r = [-r, r]^d``.  With ``half_open=True`` the box ``[-r, r)^d`` is
    used instead; it contains a whole number of periods whenever ``r`` is a
    multiple of the period, which makes periodic averages exact.
    """
    if r < 1:
        raise ValueError("block radius must be >= 1")
    total, count = 0.0, 0
    # chunk along the first axis to bound memory for large boxes
    hi0 = r - 1 if half_open else r
    step = max(1, 2_000_000 // max(1, (2 * r + 1) ** (env.d - 1)))
    for a in range(-r, hi0 + 1, step):
        lo = np.full(env.d, -r)
        hi = np.full(env.d, hi0)
        lo[0], hi[0] = a, min(hi0, a + step - 1)
        vals = f.at(env, box_sites(env.d, lo, hi))
        total += math.fsum(vals)
        count += len(vals)
    return total / count


@dataclass
class AveragingDiagnostic:
    radii: list
    averages: list
    gaps: list
    envelope: list
    converging: bool

    @property
    def non_averaging_suspected(self) -> bool:
        return not self.converging

    def rows(self):
        return list(zip(self.radii, self.averages, self.gaps, self.envelope))


def averaging_diagnostic(env: Environment, f: LocalObservable, radii: Sequence[int],
                         shrink: float = 1.5, doublings: int = 3,
                         atol: float = 1e-12, half_open: bool = False) -> AveragingDiagnostic:
    """Block averages over increasing radii with Cauchy-style gaps.

    ``gaps[k]`` is the distance to the value at the largest radius and
    ``envelope[k]`` the largest successive increment at or beyond ``radii[k]``.
    Convergence is declared when the envelope at the radius ``doublings``
    doublings below the last one has shrunk by ``shrink**doublings`` relative
    to the first radius (or all increments are below ``atol``).  This is a
    heuristic flag only.
    """
    radii = [int(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    avgs = [block_average(env, f, r, half_open) for r in radii]
    gaps = [abs(a - avgs[-1]) for a in avgs]
    incs = [abs(b - a) for a, b in zip(avgs, avgs[1:])] + [0.0]
    envelope = [max(incs[k:]) for k in range(len(incs))]
    if envelope[0] <= atol:
        converging = True
    else:
        cutoff = radii[-1] / 2**doublings
        late = [k for k, r in enumerate(radii) if r <= cutoff]
        if len(late) < 2:
            converging = False
        else:
            converging = envelope[late[-1]] * shrink**doublings <= envelope[0]
    return AveragingDiagnostic(radii, avgs, gaps, envelope, converging)


def _doubling_radii(r_max: int) -> list:
    radii, r = [], 1
    while r < r_max:
        radii.append(r)
        r *= 2
    radii.append(int(r_max))
    return radii


MOMENT_CONVENTION = ("block sums n^-d * sum over undirected edges of E(Lambda_n), each edge "
                     "counted once (the directed-pair convention differs by a factor <= 2)")


@dataclass
class MomentReport:
    p: float
    q: float
    d: int
    radii: list
    p_block_sums: list
    q_block_sums: list
    p_block_sups: list
    q_block_sups: list
    bounded: bool
    exponent_condition: bool
    convention: str = MOMENT_CONVENTION

    @property
    def admissible(self) -> bool:
        return self.bounded and self.exponent_condition


def exponent_condition(p: float, q: float, d: int) -> bool:
    """``1/p + 1/q < 2/d`` for ``d >= 2``; only ``p, q > 1`` is needed when ``d = 1``."""
    if d == 1:
        return p > 1 and q > 1
    return p > 1 and q > 1 and 1.0 / p + 1.0 / q < 2.0 / d


def moment_report(env: Environment, p: float, q: float, r_max: int,
                  growth: float = 2.0, min_edges: int = 1000,
                  dominance: float = 0.1) -> MomentReport:
    """Block sums of ``c**p`` and ``c**-q`` over doubling radii up to ``r_max``.

    The sups count as bounded when the running sup at ``r_max`` exceeds the
    one two doublings earlier by less than the factor ``growth`` and, once the
    box holds at least ``min_edges`` edges, no single edge carries more than
    the fraction ``dominance`` of either final sum (a heavy-tail signature
    that a finite scan of running sups cannot otherwise see).
    """
    if p <= 0 or q <= 0 or r_max < 1:
        raise ValueError("need p, q > 0 and r_max >= 1")
    radii = _doubling_radii(r_max)
    ps, qs = [], []
    for n in radii:
        c = env.values(*window_edges(env.d, n))
        cp, cq = c**p, c ** (-q)
        ps.append(math.fsum(cp) / n**env.d)
        qs.append(math.fsum(cq) / n**env.d)
    dominated = len(c) >= min_edges and (cp.max() > dominance * cp.sum()
                                          or cq.max() > dominance * cq.sum())
    psup = list(np.maximum.accumulate(ps))
    qsup = list(np.maximum.accumulate(qs))
    ref = max(0, len(radii) - 3)
    bounded = (psup[-1] <= growth * psup[ref] and qsup[-1] <= growth * qsup[ref]
               and not dominated)
    return MomentReport(p, q, env.d, radii, ps, qs, psup, qsup, bool(bounded),
                        exponent_condition(p, q, env.d))


@dataclass
class TemperednessReport:
    eps_grid: list
    radii: list
    fractions: list  # fractions[j][k]: eps_grid[j], radii[k]
    limsup_proxy: list
    tempered_suspected: bool


def temperedness_diagnostic(env: Environment, eps_grid: Sequence[float], r_max: int,
                            atol: float = 1e-2) -> TemperednessReport:
    """Fraction of edges of ``E(Lambda_n)`` with ``c`` outside ``[eps, 1/eps]``.

    The limsup proxy for each ``eps`` is the largest fraction over the radii in
    the upper half of the scan.  Temperedness is suspected when the proxy is
    non-increasing as ``eps`` decreases and ends below ``atol``.
    """
    eps_grid = [float(e) for e in eps_grid]
    if not all(0 < e < 1 for e in eps_grid):
        raise ValueError("every eps must lie in (0, 1)")
    radii = _doubling_radii(r_max)
    fractions = [[] for _ in eps_grid]
    for n in radii:
        c = env.values(*window_edges(env.d, n))
        for j, eps in enumerate(eps_grid):
            outside = (c < eps) | (c > 1.0 / eps)
            fractions[j].append(float(outside.sum()) / len(c))
    upper = [k for k, n in enumerate(radii) if 2 * n >= radii[-1]]
    proxy = [max(row[k] for k in upper) for row in fractions]
    order = np.argsort(eps_grid)[::-1]
    ordered = [proxy[j] for j in order]
    monotone = all(b <= a + 1e-15 for a, b in zip(ordered, ordered[1:]))
    return TemperednessReport(eps_grid, radii, fractions, proxy,
                              bool(monotone and ordered[-1] <= atol))
