"""The numba loop kernels and the numpy fallbacks must agree bit for bit."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loctime import kernels
from loctime.paths import BrownianSampler, sample_brownian

floats = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def knot_times(m, rng):
    return np.concatenate(([0.0], np.cumsum(rng.uniform(0.01, 1.0, m - 1))))


def same(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return a.shape == b.shape and np.array_equal(a, b, equal_nan=a.dtype.kind == "f")


@settings(max_examples=300, deadline=None)
@given(st.lists(floats, min_size=1, max_size=60), st.integers(0, 2**32 - 1))
def test_running_min_parity(vals, seed):
    t = knot_times(len(vals), np.random.default_rng(seed))
    g = np.array(vals)
    a, b = kernels.running_min_nb(t, g), kernels.running_min_np(t, g)
    assert same(a[0], b[0]) and same(a[1], b[1])


@settings(max_examples=300, deadline=None)
@given(
    st.lists(floats, min_size=2, max_size=60),
    st.integers(0, 2**32 - 1),
    st.sampled_from([1, 2, 3, 8, 64]),
    st.sampled_from([0.0, 0.05, 0.5]),
)
def test_inductive_scan_parity(vals, seed, n, x0):
    rng = np.random.default_rng(seed)
    t = knot_times(len(vals), rng)
    f = np.array(vals) - vals[0]
    sig = rng.uniform(0.3, 3.0, 4 * n * 8 + 8)
    a = kernels.inductive_scan_nb(t, f, sig, n, x0)
    b = kernels.inductive_scan_np(t, f, sig, n, x0)
    assert a[2] == b[2]
    assert same(a[0], b[0]) and same(a[1], b[1])


def test_inductive_scan_reports_short_table():
    t = np.array([0.0, 1.0])
    f = np.array([0.0, -10.0])
    for fn in (kernels.inductive_scan_nb, kernels.inductive_scan_np):
        ev, _, status = fn(t, f, np.ones(3), 1, 0.0)
        assert status == 1 and ev.size == 2


def test_inductive_scan_parity_on_long_brownian():
    g = sample_brownian(BrownianSampler(3, 1e-4, 2.0), 0)
    sig = 1.0 + np.arange(50_000) / 1024 * 0.7
    a = kernels.inductive_scan_nb(g.t, g.v, sig, 1024, 0.0)
    b = kernels.inductive_scan_np(g.t, g.v, sig, 1024, 0.0)
    assert a[0].size > 100
    assert same(a[0], b[0]) and same(a[1], b[1])


@settings(max_examples=200, deadline=None)
@given(st.lists(floats, min_size=2, max_size=40), st.integers(0, 2**32 - 1))
def test_bridge_level_parity(vals, seed):
    rng = np.random.default_rng(seed)
    v = np.array(vals)
    z = rng.standard_normal(v.size - 1)
    h = rng.uniform(0.001, 1.0, v.size - 1)
    assert same(kernels.bridge_level_nb(v, z, h), kernels.bridge_level_np(v, z, h))


@settings(max_examples=300, deadline=None)
@given(
    st.lists(floats, min_size=1, max_size=60),
    st.lists(st.floats(0, 4, allow_nan=False), min_size=1, max_size=8),
    st.floats(0, 2, allow_nan=False),
    st.integers(0, 2**32 - 1),
)
def test_scan_levels_parity(vals, levels, d0, seed):
    t = knot_times(len(vals), np.random.default_rng(seed))
    g = np.array(vals)
    lv = np.sort(np.array(levels))
    ptr = int(np.searchsorted(lv, d0, side="right"))
    o1, o2 = np.full(lv.size, np.nan), np.full(lv.size, np.nan)
    r1 = kernels.scan_levels_nb(t, g, d0, lv, ptr, o1)
    r2 = kernels.scan_levels_np(t, g, d0, lv, ptr, o2)
    assert r1[0] == r2[0] and r1[1] == r2[1]
    assert same(o1, o2)


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.floats(0, 2, allow_nan=False), min_size=2, max_size=60),
    st.floats(0, 1.5, allow_nan=False),
    st.floats(0.001, 0.5, allow_nan=False),
    st.integers(0, 2**32 - 1),
)
def test_window_occupation_parity(vals, lo, width, seed):
    rng = np.random.default_rng(seed)
    t = knot_times(len(vals), rng)
    y = np.array(vals)
    w = rng.uniform(0.5, 2, y.size - 1)
    a = kernels.window_occupation_nb(t, y, lo, lo + width, w)
    b = kernels.window_occupation_np(t, y, lo, lo + width, w)
    assert same(a, b)


def test_window_occupation_exact_on_linear_cell():
    # y goes 0 -> 1 over unit time: time in [0.2, 0.5] is 0.3
    out = kernels.window_occupation_np(np.array([0.0, 1.0]), np.array([0.0, 1.0]), 0.2, 0.5, np.ones(1))
    assert out[-1] == pytest.approx(0.3)
    flat = kernels.window_occupation_np(np.array([0.0, 2.0]), np.array([0.3, 0.3]), 0.2, 0.5, np.ones(1))
    assert flat[-1] == 2.0


@pytest.mark.parametrize("backend", ["numpy", "numba"])
def test_backend_switch(backend):
    code = "import loctime, loctime.kernels as k; print(loctime.backend(), k.inductive_scan.__name__)"
    env = dict(os.environ, LOCTIME_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    name, fn = out.stdout.split()
    assert name == backend
    assert fn.endswith("_np" if backend == "numpy" else "_nb")


def test_backend_rejects_unknown_value():
    env = dict(os.environ, LOCTIME_BACKEND="cuda")
    out = subprocess.run([sys.executable, "-c", "import loctime"], env=env, capture_output=True, text=True)
    assert out.returncode != 0 and "LOCTIME_BACKEND" in out.stderr
