"""Hot inner loops, each in two forms.

Every kernel has a loop twin (``*_nb``, compiled with numba when available)
and a vectorized numpy twin (``*_np``).  Both twins perform the same
floating-point operations in the same order, so they agree bit for bit; the
public name is bound to one of them according to ``LOCTIME_BACKEND``.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# --------------------------------------------------------------------------
# running maximum of -g clipped at zero, with exact crossing knots
# --------------------------------------------------------------------------


@njit
def running_min_nb(t, g):
    m = t.shape[0]
    out_t = np.empty(2 * m - 1)
    out_v = np.empty(2 * m - 1)
    cur = -g[0]
    if cur < 0.0:
        cur = 0.0
    cur = cur + 0.0  # no negative zero
    out_t[0] = t[0]
    out_v[0] = cur
    j = 1
    for k in range(m - 1):
        v0 = -g[k]
        v1 = -g[k + 1]
        if v1 > cur:
            if v0 < cur:
                tc = t[k] + (cur - v0) / (v1 - v0) * (t[k + 1] - t[k])
                if tc > t[k] and tc < t[k + 1]:
                    out_t[j] = tc
                    out_v[j] = cur
                    j += 1
            cur = v1
        out_t[j] = t[k + 1]
        out_v[j] = cur
        j += 1
    return out_t[:j].copy(), out_v[:j].copy()


def running_min_np(t, g):
    v = -g
    c = np.maximum.accumulate(np.maximum(v, 0.0)) + 0.0
    k = np.flatnonzero((c[1:] > c[:-1]) & (v[:-1] < c[:-1]))
    tc = t[k] + (c[k] - v[k]) / (v[k + 1] - v[k]) * (t[k + 1] - t[k])
    keep = (tc > t[k]) & (tc < t[k + 1])
    k, tc = k[keep], tc[keep]
    return np.insert(t, k + 1, tc), np.insert(c, k + 1, c[k])


# --------------------------------------------------------------------------
# segment-by-segment event scan of the level-n scheme
# --------------------------------------------------------------------------


@njit
def inductive_scan_nb(tf, ff, sig, n, x0):
    """Return (event_times, x_at_driver_knots, status); status 1 = sig too short."""
    m = tf.shape[0]
    ns = sig.shape[0]
    ev = np.empty(ns)
    xk = np.empty(m)
    xk[0] = x0
    i = 0
    xi = x0
    fi = ff[0]
    si = sig[0]
    target = -(i + 1) / n
    tcur = tf[0]
    for k in range(m - 1):
        ta = tf[k]
        fa = ff[k]
        tb = tf[k + 1]
        fb = ff[k + 1]
        if ta > tcur:
            tcur = ta
        while True:
            xb = xi + si * (fb - fi)
            if not (xb < target):
                break
            if i + 1 >= ns:
                return ev[:i].copy(), xk, 1
            fstar = fi + (target - xi) / si
            ts = ta + (fstar - fa) / (fb - fa) * (tb - ta)
            if ts < tcur:
                ts = tcur
            if ts > tb:
                ts = tb
            ev[i] = ts
            i += 1
            xi = target
            fi = fstar
            si = sig[i]
            target = -(i + 1) / n
            tcur = ts
        xk[k + 1] = xi + si * (fb - fi)
    return ev[:i].copy(), xk, 0


def inductive_scan_np(tf, ff, sig, n, x0):
    m = tf.shape[0]
    ns = sig.shape[0]
    xk = np.empty(m)
    xk[0] = x0
    ev = []
    i = 0
    xi = np.float64(x0)
    fi = ff[0]
    si = sig[0]
    target = -(i + 1) / n
    tcur = tf[0]
    j = 1
    block = 64
    while j < m:
        hi = min(m, j + block)
        xb = xi + si * (ff[j:hi] - fi)
        below = np.flatnonzero(xb < target)
        if below.size == 0:
            xk[j:hi] = xb
            j = hi
            block = min(block * 2, 1 << 16)
            continue
        c = j + int(below[0])
        xk[j:c] = xb[: below[0]]
        if i + 1 >= ns:
            return np.asarray(ev, dtype=np.float64), xk, 1
        ta, fa, tb, fb = tf[c - 1], ff[c - 1], tf[c], ff[c]
        lo = tcur if tcur > ta else ta
        fstar = fi + (target - xi) / si
        ts = ta + (fstar - fa) / (fb - fa) * (tb - ta)
        if ts < lo:
            ts = lo
        if ts > tb:
            ts = tb
        ev.append(ts)
        i += 1
        xi = target
        fi = fstar
        si = sig[i]
        target = -(i + 1) / n
        tcur = ts
        j = c
        block = 64
    return np.asarray(ev, dtype=np.float64), xk, 0


# --------------------------------------------------------------------------
# one dyadic level of Brownian-bridge refinement
# --------------------------------------------------------------------------


@njit
def bridge_level_nb(v, z, sub_len):
    m = v.shape[0] - 1
    out = np.empty(2 * m + 1)
    for k in range(m):
        out[2 * k] = v[k]
        out[2 * k + 1] = (v[k] + v[k + 1]) * 0.5 + np.sqrt(sub_len[k] * 0.25) * z[k]
    out[2 * m] = v[m]
    return out


def bridge_level_np(v, z, sub_len):
    out = np.empty(2 * v.shape[0] - 1)
    out[0::2] = v
    out[1::2] = (v[:-1] + v[1:]) * 0.5 + np.sqrt(sub_len * 0.25) * z
    return out


# --------------------------------------------------------------------------
# streaming first-passage scan: levels are sorted ascending, ptr = first unhit
# --------------------------------------------------------------------------


@njit
def scan_levels_nb(tt, gg, depth, levels, ptr, out):
    m = tt.shape[0]
    nl = levels.shape[0]
    for k in range(1, m):
        v1 = -gg[k]
        if v1 > depth:
            while ptr < nl and v1 > levels[ptr]:
                a = levels[ptr]
                v0 = -gg[k - 1]
                out[ptr] = tt[k - 1] + (a - v0) / (v1 - v0) * (tt[k] - tt[k - 1])
                ptr += 1
            depth = v1
    return depth, ptr


def scan_levels_np(tt, gg, depth, levels, ptr, out):
    v = -gg
    d = np.maximum.accumulate(np.maximum(v[1:], depth))
    if d.size == 0:
        return depth, ptr
    pending = levels[ptr:]
    k = np.searchsorted(d, pending, side="right")
    nhit = int(np.count_nonzero(k < d.size))
    idx = k[:nhit] + 1
    out[ptr : ptr + nhit] = tt[idx - 1] + (pending[:nhit] - v[idx - 1]) / (v[idx] - v[idx - 1]) * (
        tt[idx] - tt[idx - 1]
    )
    return float(d[-1]), ptr + nhit


# --------------------------------------------------------------------------
# time spent by a piecewise-linear path inside [lo, hi], weighted per cell
# --------------------------------------------------------------------------


@njit
def window_occupation_nb(t, y, lo, hi, w):
    m = t.shape[0]
    out = np.empty(m)
    out[0] = 0.0
    acc = 0.0
    for k in range(m - 1):
        y0 = y[k]
        y1 = y[k + 1]
        a = min(y0, y1)
        b = max(y0, y1)
        span = b - a
        if span > 0.0:
            ov = min(hi, b) - max(lo, a)
            if ov < 0.0:
                ov = 0.0
            frac = ov / span
        else:
            frac = 1.0 if (lo <= y0 and y0 <= hi) else 0.0
        acc = acc + frac * (t[k + 1] - t[k]) * w[k]
        out[k + 1] = acc
    return out


def window_occupation_np(t, y, lo, hi, w):
    y0, y1 = y[:-1], y[1:]
    a = np.minimum(y0, y1)
    b = np.maximum(y0, y1)
    span = b - a
    ov = np.maximum(np.minimum(hi, b) - np.maximum(lo, a), 0.0)
    flat = ((lo <= y0) & (y0 <= hi)).astype(np.float64)
    frac = np.where(span > 0.0, ov / np.where(span > 0.0, span, 1.0), flat)
    inc = frac * np.diff(t) * w
    out = np.empty(t.shape[0])
    out[0] = 0.0
    np.cumsum(inc, out=out[1:])
    return out


if USE_NUMBA:
    running_min_kernel = running_min_nb
    inductive_scan = inductive_scan_nb
    bridge_level = bridge_level_nb
    scan_levels = scan_levels_nb
    window_occupation = window_occupation_nb
else:
    running_min_kernel = running_min_np
    inductive_scan = inductive_scan_np
    bridge_level = bridge_level_np
    scan_levels = scan_levels_np
    window_occupation = window_occupation_np
