"""Finite-volume Dirichlet energies and the effective covariance.

For an edge field ``v`` the Dirichlet energy of a box is

    E_r(v) = inf_h sum_{e in E(Lambda_r)} c(e) (v(e) - grad h(e))^2

over ``h`` vanishing outside ``Lambda_r``.  The minimizer solves the normal
equations ``A h = div(c v)``, i.e. a Dirichlet problem for ``-L`` with
right-hand side ``f = pi^{-1} div(c v)``, which ties the energy to the
quadratic form ``<f, (-L)^{-1} f>``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse.linalg as spla

from .environments import Environment, LocalObservable, block_average, edge_conductance, \
    inverse_conductance
from .lattice import (LatticeField, SolveReport, SolverError, Window, dirichlet_operator,
                      periodic_cell, quadratic_form, solve_dirichlet)


class SizingError(ValueError):
    """The window is too small for the dependence range of the edge field."""


@dataclass(frozen=True, eq=False)
class StationaryEdgeField:
    """Antisymmetric edge field ``u(x, x + e_i) = v_i(tau_x omega) = -u(x + e_i, x)``.

    Built with :meth:`constant`, :meth:`local` or, for deterministic test
    fields that are not functions of the environment, :meth:`explicit`.
    """

    kind: str
    vector: tuple = ()
    observables: tuple = ()
    func: Callable | None = None
    radius: int = 0

    @classmethod
    def constant(cls, a) -> "StationaryEdgeField":
        return cls("constant", vector=tuple(float(v) for v in np.atleast_1d(a)))

    @classmethod
    def local(cls, observables: Sequence[LocalObservable]) -> "StationaryEdgeField":
        obs = tuple(observables)
        return cls("local", observables=obs, radius=max(o.radius for o in obs))

    @classmethod
    def explicit(cls, func: Callable, radius: int = 0) -> "StationaryEdgeField":
        """``func(bases, axes) -> values`` on canonical edges."""
        return cls("explicit", func=func, radius=radius)

    def values(self, env: Environment, bases, axes) -> np.ndarray:
        bases = np.asarray(bases, dtype=np.int64)
        axes = np.asarray(axes, dtype=np.int64)
        if self.kind == "constant":
            if len(self.vector) != env.d:
                raise ValueError("constant field has the wrong dimension")
            return np.asarray(self.vector)[axes]
        if self.kind == "local":
            out = np.empty(len(bases))
            for i, obs in enumerate(self.observables):
                sel = axes == i
                out[sel] = obs.at(env, bases[sel])
            return out
        return np.asarray(self.func(bases, axes), dtype=float)

    def directed(self, env: Environment, x, y) -> float:
        """Value on the oriented pair ``(x, y)``."""
        x, y = np.asarray(x), np.asarray(y)
        diff = y - x
        axis = int(np.flatnonzero(diff)[0])
        if diff[axis] == 1:
            return float(self.values(env, x[None], [axis])[0])
        return -float(self.values(env, y[None], [axis])[0])

    def is_zero(self) -> bool:
        return self.kind == "constant" and not any(self.vector)


@dataclass
class EnergyResult:
    r: int
    value: float  # raw infimum, one term per undirected edge
    normalized: float
    normalization: str
    minimizer: LatticeField
    report: SolveReport
    unminimized: float  # energy of h = 0
    edge_weight: float = 0.0  # sum of c over E(Lambda_r)


def _check_size(r: int, v: StationaryEdgeField):
    if r < max(1, v.radius):
        raise SizingError(f"window radius {r} is smaller than the field radius {v.radius}")


def dirichlet_energy(env: Environment, r: int, v: StationaryEdgeField, tol: float = 1e-10,
                     normalize: str = "sites", support: int | None = None,
                     method: str = "cg") -> EnergyResult:
    """Minimize ``sum_{E(Lambda_r)} c (v - grad h)^2`` over ``h`` supported in the window.

    ``support`` restricts the minimizer to ``Lambda_support`` (default ``r``);
    ``method='dense'`` solves the normal equations directly.
    ``normalize`` is ``'sites'`` (divide by ``|Lambda_r|``) or ``'pi'`` (by
    ``sum pi``).
    """
    _check_size(r, v)
    if tol <= 0:
        raise ValueError("tol must be positive")
    outer = Window(env.d, r)
    op_outer = dirichlet_operator(env, outer)
    u = v.values(env, *outer.edges)
    c = op_outer.c
    unminimized = math.fsum(c * u * u)
    s = r if support is None else int(support)
    if not 0 <= s <= r:
        raise ValueError("support radius must lie in [0, r]")
    inner = Window(env.d, s)
    op = op_outer if s == r else dirichlet_operator(env, inner)
    u_in = u if s == r else v.values(env, *inner.edges)
    b = op.divergence(op.c * u_in)
    if method == "dense":
        h = np.linalg.solve(op.A.toarray(), b)
        report = SolveReport(0, 0.0, True, tol)
    elif method == "cg":
        sol, report = solve_dirichlet(env, inner, LatticeField(inner, b / op.pi), tol, op=op)
        if not report.converged:
            raise SolverError(f"energy minimization did not converge: {report}")
        h = sol.values
    else:
        raise ValueError(f"unknown method {method!r}")
    h_outer = h if s == r else LatticeField(inner, h).values_at(outer.sites)
    mismatch = u - op_outer.gradient(h_outer)
    value = math.fsum(c * mismatch * mismatch)
    if normalize == "sites":
        norm = value / outer.size
    elif normalize == "pi":
        norm = value / math.fsum(op_outer.pi)
    else:
        raise ValueError("normalize must be 'sites' or 'pi'")
    return EnergyResult(int(r), value, norm, normalize, LatticeField(outer, h_outer), report,
                        unminimized, math.fsum(c))


def trial_energy(env: Environment, r: int, v: StationaryEdgeField, h: np.ndarray) -> float:
    """Energy of an explicit trial potential ``h`` on ``Lambda_r``."""
    window = Window(env.d, r)
    op = dirichlet_operator(env, window)
    mismatch = v.values(env, *window.edges) - op.gradient(np.asarray(h, dtype=float))
    return math.fsum(op.c * mismatch * mismatch)


@dataclass
class Lemma35Result:
    lhs: float
    rhs: float
    gap: float


def lemma35_check(env: Environment, r: int, v: StationaryEdgeField,
                  tol: float = 1e-10) -> Lemma35Result:
    """Compare ``<f, (-L)^{-1} f>_pi`` with ``<v, v>_c - E_r(v)`` for ``f = pi^{-1} div(c v)``.

    The left side comes from :func:`quadratic_form`, the right side from the
    edge sum of :func:`dirichlet_energy`; the two share only the solver.
    """
    _check_size(r, v)
    window = Window(env.d, r)
    op = dirichlet_operator(env, window)
    f = op.divergence(op.c * v.values(env, *window.edges)) / op.pi
    lhs = quadratic_form(env, window, LatticeField(window, f), tol)
    energy = dirichlet_energy(env, r, v, tol)
    rhs = energy.unminimized - energy.value
    return Lemma35Result(lhs, rhs, abs(lhs - rhs))


@dataclass
class EnergyScan:
    radii: list
    values: list
    gaps: list  # successive |value_k - value_{k-1}|, first entry nan
    results: list = field(repr=False, default_factory=list)
    target: float | None = None

    @property
    def target_gaps(self):
        if self.target is None:
            return None
        return [abs(v - self.target) / abs(self.target) if self.target else abs(v)
                for v in self.values]


def energy_scan(env: Environment, radii: Sequence[int], v: StationaryEdgeField,
                tol: float = 1e-10, target: float | None = None) -> EnergyScan:
    """Normalized energies ``|Lambda_r|^{-1} E_r(v)`` over increasing radii."""
    radii = [int(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be increasing")
    results = [dirichlet_energy(env, r, v, tol) for r in radii]
    values = [res.normalized for res in results]
    gaps = [math.nan] + [abs(b - a) for a, b in zip(values, values[1:])]
    return EnergyScan(radii, values, gaps, results, target)


def _grounded_solve(A, b):
    """Solve a singular Laplacian system with consistent ``b`` by pinning site 0."""
    h = np.zeros(len(b))
    if len(b) > 1:
        h[1:] = spla.spsolve(A[1:, 1:].tocsc(), b[1:])
    return h


def periodic_cell_energy(env: Environment, v: StationaryEdgeField, r_cell: int | None = None):
    """Exact stationary infimum per site for a periodic environment.

    Minimizes ``sum c (v - grad h)^2`` over periodic ``h`` on the torus
    ``[-r, r)^d`` and divides by the number of sites.  Returns
    ``(per_site, per_edge_weight)`` where the second value divides by
    ``sum_e c(e)`` instead.
    """
    if r_cell is None:
        r_cell = max(env.period)
    cell = periodic_cell(env, r_cell)
    u = v.values(env, cell.sites[cell.tail], cell.axes)
    h = _grounded_solve(cell.A, cell.divergence(cell.c * u))
    mismatch = u - cell.gradient(h)
    value = math.fsum(cell.c * mismatch * mismatch)
    return value / cell.size, value / math.fsum(cell.c)


# ---------------------------------------------------------------------------
# effective covariance


@dataclass
class CovMatrix:
    matrix: np.ndarray
    r: int
    boundary: str
    tol: float
    quadratic_values: dict = field(default_factory=dict)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def to_json(self) -> str:
        doc = {
            "sigma": self.matrix.tolist(),
            "estimator": {"r": self.r, "boundary": self.boundary, "tol": self.tol},
            "quadratic_values": {k: v for k, v in sorted(self.quadratic_values.items())},
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def _polarize(d: int, q: Callable) -> tuple[np.ndarray, dict]:
    e = np.eye(d)
    diag = [q(e[i]) for i in range(d)]
    S = np.diag(diag)
    values = {f"e{i + 1}": diag[i] for i in range(d)}
    for i, j in itertools.combinations(range(d), 2):
        qij = q(e[i] + e[j])
        values[f"e{i + 1}+e{j + 1}"] = qij
        S[i, j] = S[j, i] = (qij - diag[i] - diag[j]) / 2.0
    return S, values


def effective_sigma(env: Environment, r: int, tol: float = 1e-10,
                    boundary: str = "dirichlet") -> CovMatrix:
    """Variational estimate of the effective covariance.

    ``a.Sigma a`` is the minimum over ``h`` of ``sum_e c(e) (a_i(e) + grad h(e))^2``
    divided by ``sum_e c(e)`` over the same edges.  Counting each undirected
    edge twice in both sums gives the directed-neighbour form of the limit.
    With ``boundary='dirichlet'`` the edges are ``E(Lambda_r)`` and ``h``
    vanishes outside the box; with ``boundary='periodic'`` they are the edges
    of the torus ``[-r, r)^d`` and the estimate is exact for periodic
    environments.  Off-diagonal entries come from polarization.
    """
    if boundary == "periodic":
        if env.period is None:
            raise ValueError("periodic boundary requested on a non-periodic environment")

        def q(a):
            # numerator per site divided by edge weight per site
            return periodic_cell_energy(env, StationaryEdgeField.constant(a), r)[1]

    elif boundary == "dirichlet":

        def q(a):
            res = dirichlet_energy(env, r, StationaryEdgeField.constant(a), tol)
            return res.value / res.edge_weight

    else:
        raise ValueError("boundary must be 'dirichlet' or 'periodic'")
    S, values = _polarize(env.d, q)
    return CovMatrix(S, int(r), boundary, tol, values)


def sigma_1d_exact(env: Environment, r_norm: int) -> float:
    """``1 / (mean(c) mean(1/c))`` with block averages over ``[-r_norm, r_norm)``."""
    if env.d != 1:
        raise ValueError("sigma_1d_exact needs d = 1")
    mc = block_average(env, edge_conductance(), r_norm, half_open=True)
    mi = block_average(env, inverse_conductance(), r_norm, half_open=True)
    return 1.0 / (mc * mi)
