"""Correctors: the explicit one-dimensional corrector, the massive corrector
``chi_eps`` solving ``(eps - L) chi = V`` and the second-order correction
``theta`` solving ``L theta = eps chi`` on a box with zero boundary values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .environments import (Environment, block_average, box_sites, inverse_conductance)
from .lattice import (LatticeField, SolverError, Window, apply_generator, dirichlet_operator,
                      periodic_cell, solve_dirichlet, solve_massive)
from .walk import WalkPath, local_drift_at


# ---------------------------------------------------------------------------
# d = 1


@dataclass
class Corrector1D:
    a: float
    n: int
    psi: np.ndarray  # psi(x) for x = -n..n
    sublinearity: dict  # m -> max_{|x|<=m} |psi(x) - x| / m

    def __call__(self, x):
        x = np.asarray(x)
        if np.any(np.abs(x) > self.n):
            raise ValueError(f"corrector tabulated only on [-{self.n}, {self.n}]")
        return self.psi[x + self.n]


def _require_1d(env: Environment):
    if env.d != 1:
        raise ValueError("this construction needs a one-dimensional environment")


def corrector_1d(env: Environment, n: int, r_norm: int, ms=None) -> Corrector1D:
    """Harmonic coordinate ``psi(0) = 0``, ``psi(x+1) - psi(x) = a / c(x, x+1)``.

    ``a`` is the inverse of the block average of ``1/c(0, 1)`` over
    ``[-r_norm, r_norm)``; ``ms`` lists the scales of the sublinearity profile
    (powers of two up to ``n`` by default).
    """
    _require_1d(env)
    if n < 1 or r_norm < 1:
        raise ValueError("n and r_norm must be >= 1")
    inv_mean = block_average(env, inverse_conductance(), r_norm, half_open=True)
    inv_c = 1.0 / env.values(np.arange(-n, n).reshape(-1, 1), 0)  # edges -n..n-1
    pos = np.concatenate([[0.0], np.cumsum(inv_c[n:])])  # psi(0..n) * inv_mean
    neg = -np.cumsum(inv_c[:n][::-1])[::-1]  # psi(-n..-1) * inv_mean
    psi = np.concatenate([neg, pos]) / inv_mean
    if ms is None:
        ms = [2**j for j in range(int(math.log2(n)) + 1)]
    x = np.arange(-n, n + 1)
    dev = np.abs(psi - x)
    prof = {}
    for m in ms:
        if m > n:
            raise ValueError(f"profile scale {m} exceeds n={n}")
        prof[int(m)] = float(dev[n - m: n + m + 1].max() / m)
    return Corrector1D(1.0 / inv_mean, int(n), psi, prof)


def martingale_statistics(env: Environment, path: WalkPath, a: float, eps: float = 0.1):
    """Conditional-variance and Lindeberg statistics of ``psi(X_k)`` along a path.

    Returns ``(qv, lindeberg)`` with ``qv = (1/n) sum_k E[(Delta psi)^2 | F]`` and
    ``lindeberg`` the same sum restricted to increments above ``eps sqrt(n)``.
    """
    _require_1d(env)
    x = path.positions[:-1]
    cf = env.values(x, 0)
    cb = env.values(x - 1, 0)
    p_f = cf / (cf + cb)
    inc_f = a / cf
    inc_b = a / cb
    n = path.n
    qv = p_f * inc_f**2 + (1 - p_f) * inc_b**2
    cut = eps * math.sqrt(n)
    lind = p_f * inc_f**2 * (inc_f > cut) + (1 - p_f) * inc_b**2 * (inc_b > cut)
    return math.fsum(qv) / n, math.fsum(lind) / n


# ---------------------------------------------------------------------------
# massive corrector


def padding_width(epsilon: float, tol: float) -> int:
    return int(math.ceil(math.log(1.0 / tol) / math.sqrt(epsilon)))


@dataclass
class ChiField:
    """``chi_eps(tau_x omega)`` reported on ``Lambda_r``; solved on ``Lambda_{r+pad}``."""

    epsilon: float
    r: int
    pad: int
    field: LatticeField  # on Lambda_r, shape (N, d)
    padded: LatticeField  # on Lambda_{r+pad}
    residual: float
    report: object

    @property
    def window(self) -> Window:
        return self.field.window

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    def meta(self) -> dict:
        return {"epsilon": self.epsilon, "r": self.r, "pad": self.pad}


def _restrict(field: LatticeField, window: Window) -> LatticeField:
    return LatticeField(window, field.values_at(window.sites))


def massive_residual(env: Environment, chi: LatticeField, epsilon: float, window: Window) -> float:
    """``||(eps - L) chi - V||`` in ``l^2(window, pi)`` (unnormalized)."""
    Lchi = apply_generator(env, chi)
    inner = chi.window.index_of(window.sites)
    res = epsilon * chi.values[inner] - Lchi.values[inner] - local_drift_at(env, window.sites)
    pi = env.pi_at(window.sites)
    return math.sqrt(math.fsum(np.ravel(pi[:, None] * res**2)))


def chi_eps(env: Environment, r: int, epsilon: float, tol: float = 1e-10,
            pad: int | None = None) -> ChiField:
    """Solve ``(eps - L) chi = V`` componentwise on a padded box.

    The padding ``ceil(ln(1/tol) / sqrt(eps))`` covers the screening length of
    ``(eps - L)^{-1}``; ``tol`` also bounds the reported residual on ``Lambda_r``.
    """
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    if r < 1:
        raise ValueError("r must be >= 1")
    pad = padding_width(epsilon, tol) if pad is None else int(pad)
    big = Window(env.d, r + pad)
    op = dirichlet_operator(env, big)
    V = local_drift_at(env, big.sites)
    vnorm = math.sqrt(math.fsum(np.ravel(op.pi[:, None] * V**2)))
    solver_tol = tol / (10.0 * max(1.0, vnorm))
    chi, report = solve_massive(env, big, LatticeField(big, V), epsilon, solver_tol, op=op)
    if not report.converged:
        raise SolverError(f"massive solve did not converge: {report}")
    small = Window(env.d, r)
    residual = massive_residual(env, chi, epsilon, small)
    out = ChiField(float(epsilon), int(r), pad, _restrict(chi, small), chi, residual, report)
    out.field.meta.update(out.meta())
    return out


def chi_periodic(env: Environment, epsilon: float, r_cell: int | None = None):
    """Dense solve of ``(eps - L) chi = V`` on the torus ``[-r, r)^d``.

    Exact for periodic environments (no truncation).  Returns ``(values, sites)``.
    """
    if r_cell is None:
        r_cell = max(env.period)
    cell = periodic_cell(env, r_cell)
    V = local_drift_at(env, cell.sites)
    M = cell.A.toarray() + epsilon * np.diag(cell.pi)
    sol = np.linalg.solve(M, cell.pi[:, None] * V)
    return sol, cell.sites


@dataclass
class ThetaField:
    r: int
    epsilon: float
    field: LatticeField  # (N, d) on Lambda_r
    residual: float
    report: object

    @property
    def values(self):
        return self.field.values


def theta(env: Environment, r: int, epsilon: float, chi: ChiField | LatticeField,
          tol: float = 1e-10) -> ThetaField:
    """Solve ``L theta = eps chi`` on ``Lambda_r`` with ``theta = 0`` outside."""
    window = Window(env.d, r)
    chi_vals = chi.field.values_at(window.sites) if isinstance(chi, ChiField) \
        else chi.values_at(window.sites)
    rhs = LatticeField(window, -epsilon * chi_vals)
    th, report = solve_dirichlet(env, window, rhs, tol)
    if not report.converged:
        raise SolverError(f"theta solve did not converge: {report}")
    Lth = apply_generator(env, th).values
    pi = env.pi_at(window.sites)
    res = Lth - epsilon * chi_vals
    residual = math.sqrt(math.fsum(np.ravel(pi[:, None] * res**2 if res.ndim > 1 else pi * res**2)))
    return ThetaField(int(r), float(epsilon), th, residual, report)


def harmonic_defect(env: Environment, chi: ChiField, th: ThetaField) -> np.ndarray:
    """``L(x + chi - theta)`` at every site of ``Lambda_r`` (shape ``(N, d)``).

    Zero in exact arithmetic: ``L x = V``, ``L chi = eps chi - V`` and
    ``L theta = eps chi``.
    """
    r = th.r
    outer = Window(env.d, r + 1)
    g = (outer.sites.astype(float) + chi.padded.values_at(outer.sites)
         - th.field.values_at(outer.sites))
    Lg = apply_generator(env, LatticeField(outer, g)).values
    return Lg[outer.index_of(Window(env.d, r).sites)]


def eps_chi_norm(env: Environment, r: int, epsilon: float, tol: float = 1e-10,
                 chi: ChiField | None = None) -> float:
    """``sqrt(sum_{Lambda_r} pi |eps chi|^2 / sum_{Lambda_r} pi)``."""
    chi = chi or chi_eps(env, r, epsilon, tol)
    pi = env.pi_at(chi.window.sites)
    sq = np.sum((epsilon * chi.values) ** 2, axis=1)
    return math.sqrt(math.fsum(pi * sq) / math.fsum(pi))


def cocycle_gap(env: Environment, x, r: int, epsilon: float, tol: float = 1e-10) -> float:
    """Largest violation of ``psi(x + y) - psi(x) = psi^{tau_x}(y)`` over ``|y| <= r``.

    ``psi(y) = y + chi(y) - chi(0)`` is built from ``chi_eps`` of ``env`` and
    of ``tau_x env`` solved independently; ``|x| + r`` must fit inside the
    first window.
    """
    x = np.asarray(x, dtype=np.int64).reshape(env.d)
    reach = int(np.abs(x).max()) + r
    base = chi_eps(env, reach, epsilon, tol)
    moved = chi_eps(env.shift(x), r, epsilon, tol)
    ys = box_sites(env.d, -r, r)
    psi = lambda chi, s: s + chi.field.values_at(s) - chi.field.at(np.zeros(env.d, dtype=np.int64))
    lhs = psi(base, ys + x) - psi(base, x[None, :])
    rhs = psi(moved, ys)
    return float(np.abs(lhs - rhs).max())
