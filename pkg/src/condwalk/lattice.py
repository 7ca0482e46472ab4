"""Finite-window linear algebra for the lattice generator.

On a window ``Lambda_r = [-r, r]^d`` fields vanish outside the window.  The
generator ``(L h)(x) = sum_y P(x, y) (h(y) - h(x))`` is then ``-D^{-1} A``
with ``D = diag(pi)`` and ``A = D - C`` the Dirichlet conductance Laplacian,
which is symmetric positive definite.  All solves run preconditioned
conjugate gradients on ``A`` and measure residuals in ``l^2(Lambda, pi)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .environments import Environment, box_sites, window_edges


@dataclass(frozen=True, eq=False)
class Window:
    """The box ``[-r, r]^d`` with its sites and the edges incident to it."""

    d: int
    r: int

    def __post_init__(self):
        if self.d < 1 or self.r < 0:
            raise ValueError("window needs d >= 1 and r >= 0")

    @property
    def side(self) -> int:
        return 2 * self.r + 1

    @property
    def size(self) -> int:
        return self.side**self.d

    @cached_property
    def sites(self) -> np.ndarray:
        return box_sites(self.d, -self.r, self.r)

    @cached_property
    def _strides(self) -> np.ndarray:
        return self.side ** np.arange(self.d - 1, -1, -1, dtype=np.int64)

    def contains(self, sites) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.d)
        return np.all(np.abs(sites) <= self.r, axis=1)

    def index_of(self, sites) -> np.ndarray:
        """Row index of each site in :attr:`sites`, ``-1`` outside the window."""
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.d)
        idx = (sites + self.r) @ self._strides
        return np.where(self.contains(sites), idx, -1)

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """``(bases, axes)`` of ``E(Lambda_r)``, each undirected edge once."""
        return window_edges(self.d, self.r)

    @cached_property
    def edge_ends(self) -> tuple[np.ndarray, np.ndarray]:
        """Window indices of edge tails (bases) and heads, ``-1`` when outside."""
        bases, axes = self.edges
        heads = bases.copy()
        heads[np.arange(len(heads)), axes] += 1
        return self.index_of(bases), self.index_of(heads)

    def interior(self, depth: int = 1) -> np.ndarray:
        """Mask of sites at sup-distance >= ``depth`` from the complement."""
        return np.all(np.abs(self.sites) <= self.r - depth, axis=1)


@dataclass(eq=False)
class LatticeField:
    """Values per window site (shape ``(N,)`` or ``(N, k)``), zero outside."""

    window: Window
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.window.size:
            raise ValueError(f"field has {self.values.shape[0]} rows, window has {self.window.size}")

    @property
    def arity(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    def at(self, x):
        idx = self.window.index_of(np.atleast_1d(x))[0]
        if idx < 0:
            return np.zeros(self.values.shape[1:]) if self.values.ndim > 1 else 0.0
        return self.values[idx]

    def values_at(self, sites) -> np.ndarray:
        """Values at arbitrary sites, zero outside the window."""
        idx = self.window.index_of(sites)
        out = np.zeros((len(idx),) + self.values.shape[1:])
        out[idx >= 0] = self.values[idx[idx >= 0]]
        return out

    def component(self, j: int) -> "LatticeField":
        return LatticeField(self.window, self.values[:, j], dict(self.meta))

    def __add__(self, other):
        return LatticeField(self.window, self.values + _vals(other))

    def __sub__(self, other):
        return LatticeField(self.window, self.values - _vals(other))

    def __mul__(self, a: float):
        return LatticeField(self.window, a * self.values)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, window: Window, arity: int | None = None) -> "LatticeField":
        shape = (window.size,) if arity is None else (window.size, arity)
        return cls(window, np.zeros(shape))


def _vals(x):
    return x.values if isinstance(x, LatticeField) else x


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    tol: float = 0.0


class SolverError(RuntimeError):
    """Raised by callers that require convergence when a solve did not converge."""


# ---------------------------------------------------------------------------
# operator assembly


@dataclass(eq=False)
class DirichletOperator:
    """``A = D - C`` on a window together with the edge data used to build it."""

    window: Window
    c: np.ndarray  # conductances of window.edges
    pi: np.ndarray  # pi at window sites, exterior edges included
    A: sp.csr_matrix

    def apply_generator(self, h: np.ndarray) -> np.ndarray:
        return -(self.A @ h) / _col(self.pi, h)

    def gradient(self, h: np.ndarray) -> np.ndarray:
        """``h(x + e_i) - h(x)`` on every edge of ``E(Lambda)``, zero-extended."""
        tail, head = self.window.edge_ends
        return _take(h, head) - _take(h, tail)

    def divergence(self, flux: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`gradient`: the normal-equation right-hand side.

        ``b(y) = sum_{e: head = y} flux(e) - sum_{e: tail = y} flux(e)``.
        """
        tail, head = self.window.edge_ends
        n = self.window.size
        shape = (n,) + flux.shape[1:]
        out = np.zeros(shape)
        m = head >= 0
        np.add.at(out, head[m], flux[m])
        m = tail >= 0
        np.subtract.at(out, tail[m], flux[m])
        return out

    def edge_energy(self, h: np.ndarray) -> float:
        """``sum_{E(Lambda)} c(e) (grad h(e))^2``."""
        g = self.gradient(h)
        return math.fsum(np.ravel(_col(self.c, g) * g * g))


def _col(w, like):
    return w if np.ndim(like) == 1 else w[:, None]


def _take(h, idx):
    out = np.zeros((len(idx),) + h.shape[1:])
    m = idx >= 0
    out[m] = h[idx[m]]
    return out


def dirichlet_operator(env: Environment, window: Window) -> DirichletOperator:
    if env.d != window.d:
        raise ValueError("environment and window dimensions differ")
    bases, axes = window.edges
    c = env.values(bases, axes)
    tail, head = window.edge_ends
    n = window.size
    pi = np.zeros(n)
    np.add.at(pi, tail[tail >= 0], c[tail >= 0])
    np.add.at(pi, head[head >= 0], c[head >= 0])
    inner = (tail >= 0) & (head >= 0)
    rows = np.concatenate([tail[inner], head[inner], np.arange(n)])
    cols = np.concatenate([head[inner], tail[inner], np.arange(n)])
    vals = np.concatenate([-c[inner], -c[inner], pi])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return DirichletOperator(window, c, pi, A)


# ---------------------------------------------------------------------------
# solvers


def default_maxiter(window: Window) -> int:
    return 50 * (2 * window.r + 1)


def pcg(A, b: np.ndarray, pi: np.ndarray, tol: float, maxiter: int,
        precond: np.ndarray | None = None, x0: np.ndarray | None = None):
    """Jacobi-preconditioned CG for ``A x = b`` with ``b = pi * rhs``.

    Stops when ``||rhs - D^{-1} A x||_pi / ||rhs||_pi <= tol``; both norms
    reduce to ``sqrt(r . r / pi)`` in terms of the ``A``-residual ``r``.
    """
    precond = pi if precond is None else precond
    bnorm = math.sqrt(float(b @ (b / pi)))
    x = np.zeros_like(b) if x0 is None else x0.astype(float).copy()
    if bnorm == 0.0:
        return x * 0.0, SolveReport(0, 0.0, True, tol)
    r = b - A @ x if x0 is not None else b.copy()
    res = math.sqrt(float(r @ (r / pi))) / bnorm
    if res <= tol:
        return x, SolveReport(0, res, True, tol)
    z = r / precond
    p = z.copy()
    rz = float(r @ z)
    for k in range(1, maxiter + 1):
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        res = math.sqrt(float(r @ (r / pi))) / bnorm
        if res <= tol:
            # confirm on the true residual to guard against drift
            true = b - A @ x
            res = math.sqrt(float(true @ (true / pi))) / bnorm
            if res <= tol:
                return x, SolveReport(k, res, True, tol)
            r = true
        z = r / precond
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, SolveReport(maxiter, res, False, tol)


def _solve_components(A, pi, precond, rhs: np.ndarray, tol, maxiter):
    if rhs.ndim == 1:
        return pcg(A, pi * rhs, pi, tol, maxiter, precond)
    cols, reports = [], []
    for j in range(rhs.shape[1]):
        x, rep = pcg(A, pi * rhs[:, j], pi, tol, maxiter, precond)
        cols.append(x)
        reports.append(rep)
    report = SolveReport(sum(r.iterations for r in reports), max(r.residual for r in reports),
                         all(r.converged for r in reports), tol)
    return np.stack(cols, axis=1), report


def apply_generator(env: Environment, field: LatticeField) -> LatticeField:
    """``(L h)(x) = sum_y P(x, y) (h(y) - h(x))`` with ``h = 0`` off the window."""
    op = dirichlet_operator(env, field.window)
    return LatticeField(field.window, op.apply_generator(field.values))


def solve_dirichlet(env: Environment, window: Window, rhs: LatticeField, tol: float = 1e-10,
                    maxiter: int | None = None, op: DirichletOperator | None = None):
    """Solve ``(-L) h = rhs`` on the window with ``h = 0`` outside."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    op = op or dirichlet_operator(env, window)
    x, report = _solve_components(op.A, op.pi, op.pi, rhs.values, tol,
                                  maxiter or default_maxiter(window))
    return LatticeField(window, x), report


def solve_massive(env: Environment, window: Window, rhs: LatticeField, epsilon: float,
                  tol: float = 1e-10, maxiter: int | None = None,
                  op: DirichletOperator | None = None):
    """Solve ``(epsilon - L) h = rhs`` on the window with ``h = 0`` outside."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    op = op or dirichlet_operator(env, window)
    M = op.A + epsilon * sp.diags(op.pi)
    x, report = _solve_components(M.tocsr(), op.pi, (1.0 + epsilon) * op.pi, rhs.values, tol,
                                  maxiter or default_maxiter(window))
    return LatticeField(window, x), report


def neumann_series_massive(env: Environment, window: Window, rhs: LatticeField,
                           epsilon: float, n_terms: int):
    """Partial sum ``sum_{n < n_terms} (1 + eps)^-(n+1) Pi^n rhs`` with ``Pi = 1 + L``.

    Returns ``(field, tail_bound)`` where ``tail_bound`` bounds the sup-norm
    of the omitted terms by ``(1 + eps)^-n_terms / eps * max|rhs|``.
    """
    if not epsilon > 0 or n_terms < 1:
        raise ValueError("need epsilon > 0 and n_terms >= 1")
    op = dirichlet_operator(env, window)
    P = sp.diags(1.0 / op.pi) @ (sp.diags(op.pi) - op.A)
    term = rhs.values / (1.0 + epsilon)
    total = term.copy()
    for _ in range(n_terms - 1):
        term = (P @ term) / (1.0 + epsilon)
        total += term
    tail = (1.0 + epsilon) ** (-n_terms) / epsilon * float(np.abs(rhs.values).max(initial=0.0))
    return LatticeField(window, total), tail


def pi_inner(pi: np.ndarray, g: np.ndarray, h: np.ndarray) -> float:
    return math.fsum(np.ravel(_col(pi, g) * g * h))


def quadratic_form(env: Environment, window: Window, f: LatticeField, tol: float = 1e-10,
                   maxiter: int | None = None, return_solution: bool = False):
    """``<f, (-L)^{-1} f>`` in ``l^2(Lambda, pi)`` via one Dirichlet solve."""
    op = dirichlet_operator(env, window)
    h, report = solve_dirichlet(env, window, f, tol, maxiter, op=op)
    if not report.converged:
        raise SolverError(f"Dirichlet solve did not converge: {report}")
    value = pi_inner(op.pi, f.values, h.values)
    if return_solution:
        return value, h, report
    return value


# ---------------------------------------------------------------------------
# periodic cells


@dataclass(eq=False)
class PeriodicCell:
    """Torus ``[-r, r)^d`` with wrap-around edges, for periodic environments."""

    d: int
    r: int
    sites: np.ndarray
    tail: np.ndarray
    head: np.ndarray
    axes: np.ndarray
    c: np.ndarray
    pi: np.ndarray
    A: sp.csr_matrix

    @property
    def size(self) -> int:
        return len(self.sites)

    def gradient(self, h):
        return h[self.head] - h[self.tail]

    def divergence(self, flux):
        out = np.zeros((self.size,) + flux.shape[1:])
        np.add.at(out, self.head, flux)
        np.subtract.at(out, self.tail, flux)
        return out


def periodic_cell(env: Environment, r: int) -> PeriodicCell:
    """Build the torus of side ``2r``; ``r`` must be a multiple of the period."""
    period = env.period
    if period is None:
        raise ValueError("periodic boundary requires a periodic environment")
    if r < 1 or any(r % p for p in period):
        raise ValueError(f"r={r} is not a multiple of the period {period}")
    d, side = env.d, 2 * r
    sites = box_sites(d, -r, r - 1)
    strides = side ** np.arange(d - 1, -1, -1, dtype=np.int64)
    n = len(sites)
    tails, heads, axes = [], [], []
    for i in range(d):
        nb = sites.copy()
        nb[:, i] = (nb[:, i] + 1 + r) % side - r
        tails.append(np.arange(n))
        heads.append((nb + r) @ strides)
        axes.append(np.full(n, i))
    tail, head, ax = map(np.concatenate, (tails, heads, axes))
    c = env.values(sites[tail], ax)
    pi = np.zeros(n)
    np.add.at(pi, tail, c)
    np.add.at(pi, head, c)
    rows = np.concatenate([tail, head, np.arange(n)])
    cols = np.concatenate([head, tail, np.arange(n)])
    vals = np.concatenate([-c, -c, pi])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return PeriodicCell(d, r, sites, tail, head, ax, c, pi, A)
