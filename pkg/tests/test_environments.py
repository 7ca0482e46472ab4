import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from condwalk.environments import (
    Constant, DimensionMismatchError, Edge, GrowingBlocks, HashedIid, HyperplaneRule,
    LocalObservable, Pareto, Periodic, Perturbed, QuasiPeriodic, Shifted, TwoPoint, Uniform,
    _exact_floor_product, averaging_diagnostic, block_average, box_sites, conductance,
    constant_observable, edge_conductance, exponent_condition, inverse_conductance,
    moment_report, parse_distribution, pi, shift, temperedness_diagnostic, window_edges)


def random_edges(d, n, rng, span=50):
    return rng.integers(-span, span + 1, size=(n, d)), rng.integers(0, d, size=n)


# --- conductance -----------------------------------------------------------------


def test_constant_conductance(const2):
    assert conductance(const2, Edge((3, -7), 1)) == 1.0


def test_golden_parity_examples(golden):
    # floor(alpha k) for k = 0, 1, 2 is 0, 0, 1
    assert [conductance(golden, Edge((k,), 0)) for k in (0, 1, 2)] == [2.0, 2.0, 1.0]


def test_period2_examples(period2):
    assert [conductance(period2, Edge((k,), 0)) for k in (0, 1, 2)] == [1.0, 2.0, 1.0]


def test_axis_out_of_range(const2):
    with pytest.raises(DimensionMismatchError):
        conductance(const2, Edge((0, 0), 2))
    with pytest.raises(DimensionMismatchError):
        conductance(const2, Edge((0, 0, 0), 0))


def test_both_orientations_resolve_to_canonical_edge(iid2):
    x, y = (4, -1), (4, 0)
    assert Edge.between(x, y) == Edge.between(y, x) == Edge((4, -1), 1)
    with pytest.raises(ValueError):
        Edge.between((0, 0), (1, 1))


def test_symmetry_of_directed_queries(iid2):
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = tuple(int(v) for v in rng.integers(-30, 30, 2))
        i = int(rng.integers(0, 2))
        y = list(x)
        y[i] += 1
        e1, e2 = Edge.between(x, tuple(y)), Edge.between(tuple(y), x)
        assert conductance(iid2, e1) == conductance(iid2, e2)


def test_positivity_over_many_edges():
    rng = np.random.default_rng(1)
    bases, axes = random_edges(3, 10**5, rng, span=10**6)
    for env in (HashedIid(3, Pareto(1.5, 0.1), 3), HashedIid(3, TwoPoint(0.01, 5.0, 0.3), 4),
                QuasiPeriodic((0.3819660112501051, 0.6180339887498949, 0.7071067811865476))):
        assert np.all(env.values(bases, axes) > 0)


def test_hashed_iid_reproducible_across_processes():
    code = ("import numpy as np; from condwalk.environments import HashedIid, Uniform;"
            "e = HashedIid(2, Uniform(0.5, 2.0), 7);"
            "print(repr(e.values(np.array([[3, -4], [10**9, 5]]), np.array([0, 1])).tolist()))")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True)
    here = HashedIid(2, Uniform(0.5, 2.0), 7).values(np.array([[3, -4], [10**9, 5]]),
                                                     np.array([0, 1])).tolist()
    assert out.stdout.strip() == repr(here)


def test_hashed_iid_depends_on_seed():
    rng = np.random.default_rng(2)
    b, a = random_edges(2, 100, rng)
    assert not np.array_equal(HashedIid(2, Uniform(0.5, 2), 1).values(b, a),
                              HashedIid(2, Uniform(0.5, 2), 2).values(b, a))


def test_uniform_iid_moments():
    env = HashedIid(1, Uniform(0.5, 2.0), 11)
    c = env.values(np.arange(-10**5, 10**5).reshape(-1, 1), 0)
    assert c.min() >= 0.5 and c.max() <= 2.0
    assert abs(c.mean() - 1.25) < 0.01


def test_parse_distribution():
    assert parse_distribution("uniform:0.5,2") == Uniform(0.5, 2.0)
    assert parse_distribution("two-point:1,3,0.25") == TwoPoint(1.0, 3.0, 0.25)
    assert parse_distribution("pareto:2.5") == Pareto(2.5, 1.0)
    for bad in ("gauss:0,1", "uniform:1", "uniform:-1,2", "uniform:a,b"):
        with pytest.raises(ValueError):
            parse_distribution(bad)


def test_negative_periodic_cell_rejected():
    with pytest.raises(ValueError):
        Periodic.one_dim([1.0, -2.0])


def test_exact_floor_product_against_integer_arithmetic():
    alpha = (math.sqrt(5.0) - 1.0) / 2.0
    num, den = alpha.as_integer_ratio()
    rng = np.random.default_rng(3)
    k = rng.integers(-2**40, 2**40, size=20000)
    exact = np.array([(int(v) * num) // den for v in k])
    assert np.array_equal(_exact_floor_product(alpha, k), exact)


def test_quasiperiodic_guard():
    env = QuasiPeriodic.golden(1)
    with pytest.raises(ValueError):
        env.values(np.array([[2**41]]), np.array([0]))


# --- pi ----------------------------------------------------------------------------


def test_pi_examples(const2, period2, iid2):
    assert pi(const2, (5, 5)) == 4.0
    assert pi(period2, (1,)) == 3.0
    assert pi(iid2, (2, 3)) == pi(iid2, (2, 3))


# --- shift -------------------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(z=st.tuples(st.integers(-100, 100), st.integers(-100, 100)),
       w=st.tuples(st.integers(-100, 100), st.integers(-100, 100)))
def test_shift_group_action(z, w):
    env = HashedIid(2, Uniform(0.5, 2.0), 5)
    rng = np.random.default_rng(4)
    b, a = random_edges(2, 64, rng)
    zw = (z[0] + w[0], z[1] + w[1])
    assert np.array_equal(shift(shift(env, z), w).values(b, a), shift(env, zw).values(b, a))
    assert np.array_equal(shift(env, z).values(b, a), env.values(b + np.array(z), a))


def test_shift_identity_and_period(cell2d):
    rng = np.random.default_rng(5)
    b, a = random_edges(2, 100, rng)
    assert np.array_equal(shift(cell2d, (0, 0)).values(b, a), cell2d.values(b, a))
    assert np.array_equal(shift(cell2d, (2, 0)).values(b, a), cell2d.values(b, a))


def test_shift_flattens():
    env = HashedIid(1, Uniform(1, 2), 0)
    s = shift(shift(env, (3,)), (4,))
    assert isinstance(s, Shifted) and s.offset == (7,) and s.base is env


# --- observables and block averages -------------------------------------------------


def test_block_average_examples(const2, golden, period2):
    assert block_average(const2, edge_conductance(), 7) == 1.0
    assert abs(block_average(golden, edge_conductance(), 10**6) - 1.5) <= 1e-3
    assert block_average(period2, inverse_conductance(), 64, half_open=True) == 0.75


def test_block_average_bump(period2):
    bump = edge_conductance().map(lambda c: ((c >= 1.5) & (c <= 2.5)).astype(float), "bump")
    assert block_average(period2, bump, 100, half_open=True) == 0.5


def test_block_average_shift_covariance(iid2):
    z = np.array([13, -6])
    f = edge_conductance(1) * inverse_conductance(0)
    direct = block_average(shift(iid2, z), f, 5)
    sites = box_sites(2, -5, 5)
    manual = sum(float(f(shift(iid2, tuple(x + z)))) for x in sites) / len(sites)
    assert direct == pytest.approx(manual, rel=0, abs=1e-15)


def test_perturbation_density_insensitivity():
    base = HashedIid(2, Uniform(0.5, 2.0), 9)
    pert = Perturbed(base, HyperplaneRule(0, 0), 50.0)
    f = edge_conductance().capped(10.0)
    diffs = [abs(block_average(pert, f, r) - block_average(base, f, r)) for r in (4, 16, 64)]
    assert diffs[0] > diffs[1] > diffs[2]
    assert diffs[2] < 0.1


def test_perturbed_overrides():
    env = Perturbed(Constant(2, 1.0), overrides={((0, 0), 1): 5.0})
    assert conductance(env, Edge((0, 0), 1)) == 5.0
    assert conductance(env, Edge((0, 0), 0)) == 1.0
    assert pi(env, (0, 1)) == 8.0
    with pytest.raises(ValueError):
        Perturbed(Constant(2, 1.0), overrides={((0, 0), 1): -1.0})


def test_local_observable_from_function(iid2):
    f = LocalObservable.from_function(lambda e: conductance(e, Edge((0, 0), 0)), radius=1)
    sites = box_sites(2, -2, 2)
    assert np.allclose(f.at(iid2, sites), edge_conductance().at(iid2, sites))


def test_constant_observable(iid2):
    assert block_average(iid2, constant_observable(5.0), 3) == 5.0


# --- diagnostics -------------------------------------------------------------------


def test_averaging_diagnostic_constant(const2):
    diag = averaging_diagnostic(const2, edge_conductance(), [1, 2, 4, 8])
    assert diag.gaps == [0.0] * 4 and diag.converging


def test_averaging_diagnostic_growing_blocks():
    env = GrowingBlocks()
    diag = averaging_diagnostic(env, edge_conductance(), [2**k for k in range(4, 18)])
    assert diag.converging
    assert diag.envelope[-4] < diag.envelope[0]


def test_averaging_diagnostic_requires_increasing(const2):
    with pytest.raises(ValueError):
        averaging_diagnostic(const2, edge_conductance(), [4, 2])


def test_moment_report_constant(const2):
    rep = moment_report(const2, 4, 4, 16)
    for n, s in zip(rep.radii, rep.p_block_sums):
        assert s == pytest.approx(len(window_edges(2, n)[0]) / n**2)
    assert rep.bounded and rep.admissible
    assert all(b >= a for a, b in zip(rep.p_block_sups, rep.p_block_sups[1:]))


def test_moment_report_period2(period2):
    rep = moment_report(period2, 2, 2, 1024)
    # 2n + 2 edges per radius, mean of c^2 is 2.5
    assert rep.p_block_sums[-1] == pytest.approx(2.5 * (2 * 1024 + 2) / 1024, rel=1e-3)
    assert rep.bounded


@pytest.mark.parametrize("seed", range(1, 11))
def test_moment_report_heavy_tail_not_bounded(seed):
    env = HashedIid(1, Pareto(0.5, 1.0), seed)
    assert not moment_report(env, 2, 2, 2**16).bounded


def test_moment_report_light_tail_bounded():
    assert moment_report(HashedIid(2, Uniform(0.5, 2.0), 3), 4, 4, 128).bounded


def test_exponent_condition():
    assert not exponent_condition(1, 1, 3)
    assert exponent_condition(4, 4, 2)
    assert not exponent_condition(2, 2, 2)


def test_temperedness_examples(period2):
    assert temperedness_diagnostic(Constant(1, 1.0), [0.5], 64).limsup_proxy == [0.0]
    rep = temperedness_diagnostic(period2, [0.4, 0.9], 64)
    # 1 lies inside [0.9, 1/0.9]; only the edges with c = 2 fall outside
    assert rep.limsup_proxy[0] == 0.0
    assert rep.limsup_proxy[1] == pytest.approx(0.5, abs=1e-2)
    iid = HashedIid(2, Uniform(0.5, 2.0), 3)
    assert temperedness_diagnostic(iid, [0.25], 32).limsup_proxy == [0.0]
    with pytest.raises(ValueError):
        temperedness_diagnostic(period2, [1.5], 8)
