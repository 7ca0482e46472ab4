"""Acceptance suite: one PASS/FAIL line per criterion.

Every criterion writes its numbers as CSV files under an output directory.
Criteria 1 to 9 run with one worker; criterion 10 reruns all of them with
three workers and requires byte-identical CSVs.  Run under pytest or as a
script (``python tests/test_acceptance.py``).
"""
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from condwalk import io
from condwalk.corrector import chi_eps, corrector_1d, eps_chi_norm, harmonic_defect, theta
from condwalk.environments import (Constant, HashedIid, Pareto, Periodic, QuasiPeriodic, Uniform,
                                   block_average, edge_conductance)
from condwalk.experiments import (ExperimentConfig, ergodic_average_experiment,
                                  exit_tail_experiment, iip_experiment)
from condwalk.homogenize import (StationaryEdgeField, dirichlet_energy, effective_sigma,
                                 energy_scan, lemma35_check, periodic_cell_energy, sigma_1d_exact)
from condwalk.lattice import (LatticeField, Window, apply_generator, dirichlet_operator,
                              neumann_series_massive, pi_inner, solve_dirichlet, solve_massive)
from condwalk.walk import run_batch

RUN_WORKERS = 1
RERUN_WORKERS = 3


def period2():
    return Periodic.one_dim([1.0, 2.0])


def cell2d():
    cell = np.zeros((2, 2, 2))
    cell[..., 0] = [[1.0, 2.0], [3.0, 1.0]]
    cell[..., 1] = [[2.0, 1.0], [1.0, 4.0]]
    return Periodic(cell)


def _timed(limit):
    def wrap(fn):
        def run(out, workers):
            t0 = time.perf_counter()
            ok, detail = fn(out, workers)
            elapsed = time.perf_counter() - t0
            in_time = limit is None or elapsed <= limit
            return ok and in_time, f"{detail}; {elapsed:.1f}s" + ("" if in_time else f" > {limit}s")
        run.__doc__ = fn.__doc__
        return run
    return wrap


@_timed(120)
def criterion_1(out, workers):
    """Exact d=1 diffusivity for the period-2 chain."""
    env = period2()
    exact = sigma_1d_exact(env, 1000)
    periodic = effective_sigma(env, 2, boundary="periodic").matrix[0, 0]
    n, M = 10**5, 10**4
    res = run_batch(env, np.zeros(1, int), n, np.arange(M), workers=workers)
    x = res.final[:, 0].astype(float)
    mc = float(np.var(x, ddof=1) / n)
    io.write_csv(out / "c1_final_positions.csv", ["seed", "x"], zip(res.seeds, res.final[:, 0]))
    io.write_csv(out / "c1_sigma.csv", ["exact", "periodic", "monte_carlo"], [[exact, periodic, mc]])
    ok = abs(exact - 8 / 9) <= 1e-12 and abs(periodic - exact) <= 1e-10 and abs(mc - exact) <= 0.03
    return ok, f"exact={exact:.15f} periodic={periodic:.15f} Var(X_n)/n={mc:.4f}"


@_timed(300)
def criterion_2(out, workers):
    """Simple-walk covariance in d=2."""
    env = Constant(2, 1.0)
    S = effective_sigma(env, 8).matrix
    phi = dirichlet_energy(env, 8, StationaryEdgeField.constant([1.0, 0.0])).minimizer.values
    rep = iip_experiment(ExperimentConfig(env, n=10**4, M=10**4, r=8, workers=workers))
    rep.write(out)
    io.write_csv(out / "c2_sigma.csv", ["i", "j", "sigma"],
                 [[i, j, S[i, j]] for i in range(2) for j in range(2)])
    exact = np.array_equal(S, np.diag([0.5, 0.5])) and not np.any(phi)
    zmax = float(np.abs(rep.z).max())
    return exact and rep.passed is True, f"Sigma exact={exact} max|z|={zmax:.2f}"


@_timed(60)
def criterion_3(out, workers):
    """Quadratic-form identity against the Dirichlet energy."""
    v = StationaryEdgeField.constant([1.0, 0.0])
    rows = []
    for seed in range(10):
        env = HashedIid(2, Uniform(0.5, 2.0), seed)
        for r in (8, 16):
            res = lemma35_check(env, r, v, tol=1e-10)
            rows.append([seed, r, res.lhs, res.rhs, res.gap])
    io.write_csv(out / "c3_identity.csv", ["seed", "r", "lhs", "rhs", "gap"], rows)
    worst = max(row[-1] for row in rows)
    return worst <= 1e-8, f"max gap={worst:.2e} over {len(rows)} cases"


@_timed(300)
def criterion_4(out, workers):
    """Normalized Dirichlet energy converges to the periodic-cell infimum."""
    env = cell2d()
    rows, ok, finals = [], True, []
    for name, a in (("e1", [1.0, 0.0]), ("e2", [0.0, 1.0]), ("e1+e2", [1.0, 1.0])):
        v = StationaryEdgeField.constant(a)
        target, _ = periodic_cell_energy(env, v, 2)
        scan = energy_scan(env, [16, 32, 64], v, target=target)
        gaps = scan.target_gaps
        rows += [[name, r, val, target, g] for r, val, g in zip(scan.radii, scan.values, gaps)]
        ok &= all(b < a for a, b in zip(gaps, gaps[1:])) and gaps[-1] <= 0.05
        finals.append(gaps[-1])
    io.write_csv(out / "c4_energy.csv", ["v", "r", "normalized_energy", "cell_infimum", "gap"], rows)
    return ok, "final relative gaps " + ", ".join(f"{g:.3%}" for g in finals)


@_timed(180)
def criterion_5(out, workers):
    """Shrinking of eps*chi_eps and harmonicity of x + chi_eps - theta."""
    env = period2()
    rows = []
    for eps in (0.1, 0.01, 0.001):
        chi = chi_eps(env, 512, eps)
        th = theta(env, 512, eps, chi)
        defect = float(np.abs(harmonic_defect(env, chi, th)).max())
        rows.append([eps, eps_chi_norm(env, 512, eps, chi=chi), chi.residual, defect])
    io.write_csv(out / "c5_chi.csv", ["epsilon", "eps_chi_norm", "residual", "max_defect"], rows)
    norms = [row[1] for row in rows]
    ok = (all(b < a for a, b in zip(norms, norms[1:]))
          and max(row[2] for row in rows) <= 1e-8 and max(row[3] for row in rows) <= 1e-6)
    return ok, ("norms " + ", ".join(f"{x:.3e}" for x in norms)
                + f" max residual={max(r[2] for r in rows):.1e} max defect={max(r[3] for r in rows):.1e}")


@_timed(180)
def criterion_6(out, workers):
    """Time averages along the walk on the golden-ratio chain."""
    env = QuasiPeriodic.golden(1)
    cfg = ExperimentConfig(env, n=10**6, M=100, r_norm=10**6, workers=workers)
    rep = ergodic_average_experiment(cfg, edge_conductance())
    rep.write(out)
    plain = block_average(env, edge_conductance(), 10**6, half_open=True)
    io.write_csv(out / "c6_prediction.csv", ["pi_weighted", "unweighted"], [[rep.prediction, plain]])
    within = rep.passed
    literal = abs(rep.prediction - 1.5) <= 1e-3
    return within and literal, (
        f"time avg={rep.mean:.5f} se={rep.se:.1e} within 3 SE={within}; "
        f"pi-weighted prediction={rep.prediction:.5f} equals 1.5 +- 1e-3: {literal}; "
        f"unweighted block average={plain:.5f}")


@_timed(30)
def criterion_7(out, workers):
    """Sublinear growth of the d=1 corrector."""
    ms = [2**8, 2**10, 2**12, 2**14]
    cor = corrector_1d(QuasiPeriodic.golden(1), 2**14, 10**6, ms=ms)
    prof = [cor.sublinearity[m] for m in ms]
    per = corrector_1d(period2(), 2**14, 1000)
    k = np.arange(-2**13, 2**13 + 1)
    exact = bool(np.array_equal(per(2 * k), (2 * k).astype(float)))
    io.write_csv(out / "c7_sublinearity.csv", ["m", "max_ratio"], zip(ms, prof))
    ok = all(b < a for a, b in zip(prof, prof[1:])) and exact
    return ok, "profile " + ", ".join(f"{p:.2e}" for p in prof) + f"; psi(2k)=2k: {exact}"


@_timed(300)
def criterion_8(out, workers):
    """Exit-time tail for the simple walk in d=2."""
    rep = exit_tail_experiment(Constant(2, 1.0), [16, 32], 1.0, [0.05, 0.1, 0.2, 0.4, 0.8, 1.6],
                               5000, workers=workers)
    rep.write(out)
    return bool(rep.slope >= 0.7), f"log-log slope={rep.slope:.3f}"


@_timed(60)
def criterion_9(out, workers):
    """Dirichlet and massive solver correctness."""
    rng = np.random.default_rng(2024)
    rows = []
    w = Window(2, 8)  # 289 sites
    for label, dist in (("uniform", Uniform(0.5, 2.0)), ("pareto", Pareto(1.5, 0.2))):
        env = HashedIid(2, dist, 3)
        op = dirichlet_operator(env, w)
        h0 = rng.standard_normal(w.size)
        h, _ = solve_dirichlet(env, w, apply_generator(env, LatticeField(w, h0)) * -1.0, tol=1e-12)
        rows.append(["round_trip_" + label, float(np.abs(h.values - h0).max()), 1e-8])
        g, k = rng.standard_normal(w.size), rng.standard_normal(w.size)
        a = pi_inner(op.pi, g, -op.apply_generator(k))
        b = pi_inner(op.pi, -op.apply_generator(g), k)
        rows.append(["self_adjoint_" + label, abs(a - b) / max(1.0, abs(a)), 1e-12])
        f = rng.standard_normal(w.size)
        hs, _ = solve_dirichlet(env, w, LatticeField(w, f), tol=1e-12)
        dense = np.linalg.solve(op.A.toarray(), op.pi * f)
        rows.append(["dense_" + label, float(np.abs(hs.values - dense).max()), 1e-8])
        small = Window(2, 6)
        fm = LatticeField(small, rng.standard_normal(small.size))
        eps = 0.5
        hm, _ = solve_massive(env, small, fm, eps, tol=1e-13)
        n_terms = math.ceil(math.log(np.abs(fm.values).max() / (eps * 1e-9)) / math.log1p(eps))
        s, _ = neumann_series_massive(env, small, fm, eps, n_terms)
        rows.append(["neumann_" + label, float(np.abs(s.values - hm.values).max()), 1e-8])
    io.write_csv(out / "c9_solver.csv", ["check", "error", "tolerance"], rows)
    bad = [row[0] for row in rows if not row[1] <= row[2]]
    return not bad, "all checks within tolerance" if not bad else "failed: " + ", ".join(bad)


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9}

_results: dict = {}
_root = Path(tempfile.mkdtemp(prefix="condwalk-acceptance-"))


def run_criterion(k, workers):
    key = (k, workers)
    if key not in _results:
        out = _root / f"workers{workers}"
        out.mkdir(parents=True, exist_ok=True)
        _results[key] = CRITERIA[k](out, workers)
    return _results[key]


def criterion_10():
    """Byte-identical CSVs across worker counts."""
    t0 = time.perf_counter()
    for k in CRITERIA:
        run_criterion(k, RUN_WORKERS)
        run_criterion(k, RERUN_WORKERS)
    a, b = _root / f"workers{RUN_WORKERS}", _root / f"workers{RERUN_WORKERS}"
    names = sorted(p.name for p in a.glob("*.csv"))
    same_set = names == sorted(p.name for p in b.glob("*.csv"))
    differ = [n for n in names if (a / n).read_bytes() != (b / n).read_bytes()]
    ok = same_set and not differ and bool(names)
    detail = f"{len(names)} CSVs compared, workers {RUN_WORKERS} vs {RERUN_WORKERS}"
    if differ:
        detail += "; differing: " + ", ".join(differ)
    return ok, f"{detail}; {time.perf_counter() - t0:.1f}s"


def _line(k, ok, detail):
    return f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"


@pytest.mark.slow
@pytest.mark.parametrize("k", list(range(1, 11)))
def test_criterion(k, capsys):
    ok, detail = criterion_10() if k == 10 else run_criterion(k, RUN_WORKERS)
    with capsys.disabled():
        print("\n" + _line(k, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failures = 0
    for k in range(1, 11):
        ok, detail = criterion_10() if k == 10 else run_criterion(k, RUN_WORKERS)
        print(_line(k, ok, detail), flush=True)
        failures += not ok
    sys.exit(1 if failures else 0)
