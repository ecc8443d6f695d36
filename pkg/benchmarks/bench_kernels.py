"""Compare the numba and numpy kernel backends.

Run with ``python3 benchmarks/bench_kernels.py``.  Both backends live in the
same module (``*_nb`` and ``*_np``), so one process times both and also
checks that they return identical arrays.
"""
import argparse
import time

import numpy as np

from loctime import kernels
from loctime.paths import BrownianSampler, sample_brownian


def best_of(fn, args, repeat):
    fn(*args)  # warm-up / compilation
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    return np.array_equal(a, b, equal_nan=a.dtype.kind == "f")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    T = 10.0
    f = sample_brownian(BrownianSampler(1, T / args.steps, T), 0)
    t, v = f.t, f.v
    n = 1024
    sig = np.full(int(n * (1.0 - v.min())) + 16, 1.0)
    y = np.abs(v)
    w = np.ones(t.size - 1)
    z = np.random.default_rng(0).standard_normal(t.size - 1)
    h = np.diff(t)
    levels = np.linspace(0.0, -v.min(), 50)

    cases = {
        "running_min": ("running_min", (t, v)),
        "inductive_scan": ("inductive_scan", (t, v, sig, n, 0.0)),
        "bridge_level": ("bridge_level", (v, z, h)),
        "scan_levels": ("scan_levels", None),
        "window_occupation": ("window_occupation", (t, y, 0.0, 0.05, w)),
    }
    print(f"{'kernel':<20}{'numba [ms]':>12}{'numpy [ms]':>12}{'ratio':>8}  identical")
    for name, (stem, a) in cases.items():
        nb = getattr(kernels, stem + "_nb")
        npf = getattr(kernels, stem + "_np")
        if stem == "scan_levels":
            out1, out2 = np.full(levels.size, np.nan), np.full(levels.size, np.nan)
            t1, r1 = best_of(lambda: nb(t, v, 0.0, levels, 0, out1), (), args.repeat)
            t2, r2 = best_of(lambda: npf(t, v, 0.0, levels, 0, out2), (), args.repeat)
            ok = r1 == r2 and same(out1, out2)
        else:
            t1, r1 = best_of(nb, a, args.repeat)
            t2, r2 = best_of(npf, a, args.repeat)
            ok = same(r1, r2)
        print(f"{name:<20}{1e3 * t1:>12.2f}{1e3 * t2:>12.2f}{t2 / t1:>8.1f}  {ok}")


if __name__ == "__main__":
    main()
