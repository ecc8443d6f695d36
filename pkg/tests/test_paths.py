import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loctime.errors import ConfigurationError, DomainError, UsageError
from loctime.paths import (
    BrownianSampler,
    PiecewiseLinearPath,
    depth,
    eval_path,
    first_passage,
    hitting_time,
    hitting_times,
    refine_bridge,
    restrict,
    running_min,
    sample_brownian,
)


def pl(knots):
    return PiecewiseLinearPath.from_knots(knots)


def dense_running_min(path, m=200_001):
    s = np.linspace(0, path.T, m)
    return s, np.maximum(np.maximum.accumulate(-eval_path(path, s)), 0.0)


# --- construction and evaluation ---------------------------------------------


def test_eval_midpoint_and_knot():
    g = pl([(0, 0), (1, -2), (2, 1)])
    assert g(0.5) == -1.0
    assert g(1.0) == -2.0


def test_single_knot_path():
    g = pl([(0, 5)])
    assert g.T == 0.0
    assert g(0.0) == 5.0


def test_eval_outside_horizon():
    g = pl([(0, 0), (1, 1)])
    with pytest.raises(DomainError):
        g(1.5)
    with pytest.raises(DomainError):
        g(-0.1)


@pytest.mark.parametrize(
    "knots",
    [
        [(0.1, 0), (1, 1)],
        [(0, 0), (1, 1), (1, 2)],
        [(0, 0), (1, np.inf)],
        [],
    ],
)
def test_invalid_knots(knots):
    with pytest.raises(DomainError):
        pl(knots)


def test_arrays_are_read_only():
    g = pl([(0, 0), (1, 1)])
    with pytest.raises(ValueError):
        g.v[0] = 3.0


def test_csv_round_trip_is_exact():
    rng = np.random.default_rng(0)
    t = np.concatenate(([0.0], np.cumsum(rng.random(50))))
    g = PiecewiseLinearPath(t, rng.standard_normal(51) * 1e-7)
    buf = io.StringIO()
    g.to_csv(buf)
    assert buf.getvalue().startswith("t,value\n")
    back = PiecewiseLinearPath.from_csv(io.StringIO(buf.getvalue()))
    assert back.same_knots(g)


def test_csv_header_mismatch():
    with pytest.raises(UsageError):
        PiecewiseLinearPath.from_csv(io.StringIO("time,value\n0,0\n"))


# --- running minimum -----------------------------------------------------------


def test_running_min_rise_then_recover():
    m = running_min(pl([(0, 0), (1, -1), (2, 0)]))
    assert m.knots == [(0.0, 0.0), (1.0, 1.0), (2.0, 1.0)]


def test_running_min_positive_path_is_zero():
    m = running_min(pl([(0, 2), (1, 3)]))
    assert np.all(m.v == 0.0)


def test_running_min_crossing_knot():
    # -g re-exceeds 1 on the last segment where -g(t) = 0.5 + 1.5 (t - 2), i.e. at t = 7/3
    m = running_min(pl([(0, 0), (1, -1), (2, -0.5), (3, -2)]))
    assert m.t.tolist()[:3] == [0.0, 1.0, 2.0]
    assert m.t[3] == pytest.approx(7 / 3, abs=1e-15)
    assert m.v.tolist() == [0.0, 1.0, 1.0, 1.0, 2.0]
    s, dense = dense_running_min(pl([(0, 0), (1, -1), (2, -0.5), (3, -2)]))
    assert np.max(np.abs(eval_path(m, s) - dense)) < 1e-4


def test_running_min_starts_clipped():
    assert running_min(pl([(0, -0.5), (1, 0)])).v[0] == 0.5
    assert running_min(pl([(0, 0.5), (1, 0)])).v[0] == 0.0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=30))
def test_running_min_properties(vals):
    t = np.arange(len(vals), dtype=float)
    g = PiecewiseLinearPath(t, vals)
    m = running_min(g)
    assert np.all(np.diff(m.v) >= 0)
    assert np.all(m.v >= -eval_path(g, m.t) - 1e-12)
    assert np.all(m.v >= 0)
    # every input knot survives
    assert np.all(np.isin(g.t, m.t))
    # idempotent on its own output
    mm = running_min(PiecewiseLinearPath(m.t, -m.v))
    assert np.array_equal(eval_path(mm, m.t), m.v)


def test_running_min_matches_dense_search_on_brownian():
    g = sample_brownian(BrownianSampler(5, 1e-3, 1.0), 0)
    m = running_min(g)
    s, dense = dense_running_min(g, 400_001)
    assert np.max(np.abs(eval_path(m, s) - dense)) < 1e-9 + np.max(np.abs(np.diff(g.v)))


# --- hitting times -------------------------------------------------------------


def test_hitting_time_linear():
    assert hitting_time(pl([(0, 0), (2, -2)]), 0.5) == 0.5


def test_hitting_time_never_negative():
    assert hitting_time(pl([(0, 1), (1, 2)]), 0.0) is None


def test_hitting_time_touch_is_not_a_hit():
    g = pl([(0, 0), (1, -1), (2, 0)])
    assert hitting_time(g, 1.0) is None
    # dense-grid oracle agrees: the maximum of -g is exactly 1
    s, dense = dense_running_min(g)
    assert dense.max() == 1.0 and not np.any(dense > 1.0)


def test_hitting_time_negative_level():
    with pytest.raises(DomainError):
        hitting_time(pl([(0, 0), (1, -1)]), -0.1)


def test_hitting_time_consistency_with_running_min():
    g = sample_brownian(BrownianSampler(9, 1e-3, 2.0), 4)
    m = running_min(g)
    for a in np.linspace(0.01, 0.95 * depth(g), 25):
        tau = hitting_time(g, a)
        assert eval_path(m, tau) == pytest.approx(a, abs=1e-12)
        before = m.t[m.t < tau]
        assert np.all(m.v[np.searchsorted(m.t, before)] <= a + 1e-12)


def test_hitting_times_monotone_and_right_continuous():
    g = sample_brownian(BrownianSampler(3, 1e-3, 2.0), 1)
    a = np.linspace(0.0, depth(g) * 0.99, 400)
    h = hitting_times(g, a)
    assert np.all(np.diff(h) >= 0)
    a0 = a[100]
    seq = hitting_times(g, a0 + np.logspace(-2, -14, 13))
    assert abs(seq[-1] - hitting_time(g, a0)) < 1e-9


def test_depth_and_restrict():
    g = pl([(0, 0), (1, -1), (2, 1)])
    assert depth(g) == 1.0
    r = restrict(g, 1.5)
    assert r.T == 1.5 and r.v[-1] == 0.0
    assert restrict(g, 1.0).knots == [(0.0, 0.0), (1.0, -1.0)]


# --- Brownian sampler ----------------------------------------------------------


def test_sampler_starts_at_zero_and_is_deterministic():
    s = BrownianSampler(123, 0.01, 1.0)
    a, b = sample_brownian(s, 7), sample_brownian(s, 7)
    assert a.v[0] == 0.0 and a.T == 1.0
    assert a.same_knots(b)
    assert not a.same_knots(sample_brownian(s, 8))


def test_sampler_rejects_bad_grid():
    with pytest.raises(ConfigurationError):
        BrownianSampler(1, 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        BrownianSampler(1, -0.1, 1.0)


def test_sampler_last_step_lands_on_horizon():
    s = BrownianSampler(1, 0.3, 1.0)
    assert s.n_steps == 4
    assert sample_brownian(s, 0).t.tolist() == pytest.approx([0, 0.3, 0.6, 0.9, 1.0])


def test_endpoint_variance():
    # Var B(1) = 1; with N samples the standard error of the variance is sqrt(2/N)
    s = BrownianSampler(2, 0.05, 1.0, chunk=64)
    n = 20_000
    ends = np.array([sample_brownian(s, i).v[-1] for i in range(n)])
    assert abs(ends.var(ddof=1) - 1.0) <= 3 * math.sqrt(2.0 / n)
    assert abs(ends.mean()) <= 3 / math.sqrt(n)


def test_increments_are_standard_normal_per_step():
    s = BrownianSampler(4, 1e-3, 4.0)
    inc = np.diff(sample_brownian(s, 0).v) / math.sqrt(1e-3)
    assert abs(inc.var() - 1) < 0.05
    lag = np.corrcoef(inc[:-1], inc[1:])[0, 1]
    assert abs(lag) < 4 / math.sqrt(inc.size)


def test_refine_identity_and_counts():
    s0 = BrownianSampler(11, 0.01, 1.0)
    g = sample_brownian(s0, 2)
    assert refine_bridge(g, s0, 0) is g
    r = refine_bridge(g, s0, 1, path_index=2)
    assert len(r) == 2 * (len(g) - 1) + 1
    assert np.array_equal(r.v[::2], g.v)


def test_refine_equals_direct_sampling_at_depth():
    coarse = BrownianSampler(11, 0.01, 3.0, chunk=32)
    deep = BrownianSampler(11, 0.01, 3.0, refine_depth=3, chunk=32)
    g = sample_brownian(coarse, 5)
    assert refine_bridge(g, coarse, 3, path_index=5).same_knots(sample_brownian(deep, 5))
    mid = refine_bridge(g, coarse, 1, path_index=5)
    assert refine_bridge(mid, coarse, 2, path_index=5).same_knots(sample_brownian(deep, 5))


def test_refine_rejects_foreign_path():
    s = BrownianSampler(1, 0.01, 1.0)
    with pytest.raises(ConfigurationError):
        refine_bridge(pl([(0, 0), (0.5, 1), (1, 0)]), s, 1)


def test_bridge_midpoint_variance():
    # midpoint of a bridge over h has conditional variance h/4
    coarse = BrownianSampler(21, 0.04, 40.0)
    deep = BrownianSampler(21, 0.04, 40.0, refine_depth=1)
    g = sample_brownian(deep, 0)
    mid = g.v[1::2] - 0.5 * (g.v[:-1:2] + g.v[2::2])
    assert abs(mid.var() / 0.01 - 1) < 0.06
    assert np.array_equal(g.v[::2], sample_brownian(coarse, 0).v)


@pytest.mark.parametrize("depth_", [0, 2])
def test_first_passage_matches_materialized(depth_):
    s = BrownianSampler(77, 1e-3, 30.0, refine_depth=depth_, chunk=256)
    levels = np.array([0.0, 0.2, 0.5, 1.0, 2.0, 3.0])
    for i in range(30):
        g = sample_brownian(s, i)
        lazy, d = first_passage(s, i, levels, need_depth=True)
        full = hitting_times(g, levels)
        assert np.array_equal(lazy, full, equal_nan=True)
        assert d == depth(g)


def test_first_passage_rejects_unsorted():
    with pytest.raises(DomainError):
        first_passage(BrownianSampler(1, 0.01, 1.0), 0, [1.0, 0.5])
