"""Level-n approximation of the local-time-dependent integral equation.

Given a continuous driver ``f`` with ``f(0) = 0``, a start ``x0 >= 0`` and a
noise coefficient ``sigma`` bounded away from zero, the level-``n`` solution
scales the increments of ``f`` by ``sigma(i/n)`` between consecutive event
times, where the ``i``-th event is the first time ``x`` drops below ``-i/n``.
The pair ``(x, L)`` with ``L`` the signed running minimum of ``x`` converges
uniformly as ``n`` doubles.

Two independent constructions are provided: one from hitting times of the
driver's running minimum, one by scanning the driver segment by segment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .csvio import write_columns
from .errors import DomainError, UsageError
from .noise import NoiseCoefficient, require_positive_floor
from .paths import (
    PiecewiseLinearPath,
    depth,
    eval_path,
    hitting_time,
    hitting_times,
    running_min,
)


@dataclass(frozen=True, eq=False)
class SchemeSolution:
    """One level-``n`` run.

    ``thresholds[i]`` is the cumulative sum ``a_{i+1}`` matching
    ``event_times[i]``; with ``x0 > 0`` the driver depth at that event is
    ``x0 / sigma(0) + a_{i+1}``.
    """

    n: int
    event_times: np.ndarray
    thresholds: np.ndarray
    x: PiecewiseLinearPath
    L: PiecewiseLinearPath
    sigma_used: NoiseCoefficient
    x0: float
    driver: PiecewiseLinearPath
    method: str = "inductive"

    @property
    def T(self) -> float:
        return self.x.T

    def to_csv(self, target) -> None:
        t = self.L.t
        write_columns(target, ("t", "x", "L"), (t, eval_path(self.x, t), self.L.v))


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    levels: list
    sup_gaps: list
    final: SchemeSolution
    converged: bool
    tol: float

    def to_text(self) -> str:
        lines = [
            "convergence-report",
            f"tol = {self.tol!r}",
            f"converged = {str(self.converged).lower()}",
            f"final_n = {self.final.n}",
            f"final_events = {self.final.event_times.size}",
            "n,sup_gap_to_next",
        ]
        for k, n in enumerate(self.levels):
            gap = repr(self.sup_gaps[k]) if k < len(self.sup_gaps) else ""
            lines.append(f"{n},{gap}")
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# constants
# --------------------------------------------------------------------------


def lemma2_C(sigma: NoiseCoefficient, eps: float) -> int | None:
    """Smallest integer ``C >= 1`` with ``C / (K C + sigma(0)) > 1/K - eps``.

    Returns None for ``K = 0``: a constant coefficient needs no cutoff.
    """
    K, _ = sigma.constants()
    if K == 0:
        return None
    if not math.isfinite(K):
        raise DomainError("the coefficient is not Lipschitz")
    if not 0 < eps < 1.0 / K:
        raise DomainError(f"eps must lie in (0, 1/K) = (0, {1.0 / K})")
    s0 = sigma(0.0)
    bound = 1.0 / K - eps

    def ok(c):
        return c / (K * c + s0) > bound

    c = max(1, int(math.floor(bound * s0 / (K * eps))) + 1)
    while not ok(c):
        c += 1
    while c > 1 and ok(c - 1):
        c -= 1
    return c


def oscillation_constant(sigma: NoiseCoefficient, eps: float) -> float:
    """``2 (sigma(0) + K C(eps)) + K + 2 + 1/delta``."""
    K, delta = sigma.constants()
    if not delta > 0:
        raise DomainError("oscillation constant needs delta > 0")
    c = lemma2_C(sigma, eps)
    kc = 0.0 if c is None else K * c
    return 2.0 * (sigma(0.0) + kc) + K + 2.0 + 1.0 / delta


def build_thresholds(sigma: NoiseCoefficient, n: int, i_max: int) -> np.ndarray:
    """``a_i = sum_{j<i} 1/(n sigma(j/n))`` for ``i = 0..i_max``."""
    _check_level(n)
    require_positive_floor(sigma)
    if i_max < 0:
        raise DomainError("i_max must be >= 0")
    s = np.asarray(sigma(np.arange(i_max, dtype=np.float64) / n), dtype=np.float64)
    return np.concatenate(([0.0], np.cumsum(1.0 / (n * s))))


# --------------------------------------------------------------------------
# constructions
# --------------------------------------------------------------------------


def _check_level(n) -> None:
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise DomainError("level n must be an integer >= 1")


def _check_inputs(f: PiecewiseLinearPath, sigma: NoiseCoefficient, n: int, x0: float) -> None:
    _check_level(n)
    if x0 < 0:
        raise DomainError("x0 must be >= 0")
    require_positive_floor(sigma)
    if f.v[0] != 0.0:
        raise DomainError("the driver must start at 0; pass the start through x0")


def _sigma_table(sigma: NoiseCoefficient, n: int, x0: float, reach: float) -> np.ndarray:
    """``sigma(i/n)`` for every index an event scan over depth ``reach`` can use."""
    size = 64
    dmax = sigma.domain_max
    while True:
        limit = size if dmax is None else min(size, int(math.floor(dmax * n)) + 1)
        s = np.asarray(sigma(np.arange(limit, dtype=np.float64) / n), dtype=np.float64)
        lv = x0 / s[0] + np.cumsum(1.0 / (n * s))
        over = np.flatnonzero(lv > reach)
        if over.size:
            need = int(over[0]) + 3
            if need <= limit:
                return s[:need]
        if limit < size:
            raise DomainError("local time would leave the tabulated domain of sigma")
        size *= 4


def _levels(sig: np.ndarray, n: int, x0: float) -> np.ndarray:
    """Driver depths at events ``1..len(sig)``."""
    return x0 / sig[0] + np.cumsum(1.0 / (n * sig))


def construct_by_hitting(
    f: PiecewiseLinearPath, sigma: NoiseCoefficient, n: int, x0: float = 0.0
) -> SchemeSolution:
    """Events as hitting times of the driver's running minimum, x as a telescoping sum.

    Event ``i`` occurs when ``-min f`` first exceeds ``x0/sigma(0) + a_i``;
    between events ``x`` moves by ``sigma(i/n)`` times the driver increment.
    """
    _check_inputs(f, sigma, n, x0)
    sig = _sigma_table(sigma, n, x0, depth(f))
    lv = _levels(sig, n, x0)
    hits = hitting_times(f, lv)
    m = int(np.argmax(np.isnan(hits))) if np.isnan(hits).any() else hits.size
    ev = hits[:m]
    if m >= sig.size:
        raise RuntimeError("noise table too short for the realized events")
    f_ev = np.concatenate(([f.v[0]], eval_path(f, ev) if m else np.empty(0)))
    x_ev = np.concatenate(([x0], x0 + np.cumsum(sig[:m] * np.diff(f_ev))))
    tu = np.union1d(f.t, ev)
    seg = np.searchsorted(ev, tu, side="right")
    xu = x_ev[seg] + sig[seg] * (eval_path(f, tu) - f_ev[seg])
    x = PiecewiseLinearPath(tu, xu)
    a = lv[:m] - x0 / sig[0]
    return SchemeSolution(n, _ro(ev), _ro(a), x, running_min(x), sigma, float(x0), f, "hitting")


def construct_inductive(
    f: PiecewiseLinearPath, sigma: NoiseCoefficient, n: int, x0: float = 0.0
) -> SchemeSolution:
    """Events found by scanning the driver segment by segment.

    On each segment the current affine map ``x(t_i) + sigma(i/n)(f - f(t_i))``
    is compared against the next level ``-(i+1)/n``; the crossing time is
    solved exactly on the bracketing knots of ``f``.
    """
    _check_inputs(f, sigma, n, x0)
    sig = _sigma_table(sigma, n, x0, depth(f))
    while True:
        ev, xk, status = kernels.inductive_scan(f.t, f.v, sig, n, float(x0))
        if status == 0:
            break
        sig = np.asarray(sigma(np.arange(2 * sig.size, dtype=np.float64) / n), dtype=np.float64)
    m = ev.size
    targets = -np.arange(1, m + 1, dtype=np.float64) / n
    all_t = np.concatenate((ev, f.t))
    all_x = np.concatenate((targets, xk))
    order = np.argsort(all_t, kind="stable")
    tu, first = np.unique(all_t[order], return_index=True)
    x = PiecewiseLinearPath(tu, all_x[order][first])
    a = np.cumsum(1.0 / (n * sig[:m]))
    return SchemeSolution(n, _ro(ev), _ro(a), x, running_min(x), sigma, float(x0), f, "inductive")


def construct(f, sigma, n, x0=0.0, method: str = "inductive") -> SchemeSolution:
    if method == "inductive":
        return construct_inductive(f, sigma, n, x0)
    if method == "hitting":
        return construct_by_hitting(f, sigma, n, x0)
    raise UsageError(f"unknown construction method {method!r}")


def _ro(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


# --------------------------------------------------------------------------
# convergence
# --------------------------------------------------------------------------


def sup_distance(s1: SchemeSolution, s2: SchemeSolution) -> float:
    """Sup-norm distance of ``(x, L)``; exact for piecewise-linear paths."""
    if not s1.driver.same_knots(s2.driver):
        raise UsageError("solutions were built on different drivers")
    if s1.sigma_used != s2.sigma_used or s1.x0 != s2.x0:
        raise UsageError("solutions use different noise coefficients or starts")
    tu = np.union1d(s1.L.t, s2.L.t)
    dx = np.abs(eval_path(s1.x, tu) - eval_path(s2.x, tu))
    dl = np.abs(eval_path(s1.L, tu) - eval_path(s2.L, tu))
    return float(max(dx.max(), dl.max()))


def construction_gap(s1: SchemeSolution, s2: SchemeSolution) -> tuple[float, float]:
    """``(max event-time gap, max |x1 - x2| over the union of knots)``.

    The event gap is infinite when the two runs realize different event counts.
    """
    if s1.event_times.size != s2.event_times.size:
        return math.inf, sup_distance(s1, s2)
    ev = float(np.max(np.abs(s1.event_times - s2.event_times))) if s1.event_times.size else 0.0
    tu = np.union1d(s1.x.t, s2.x.t)
    return ev, float(np.max(np.abs(eval_path(s1.x, tu) - eval_path(s2.x, tu))))


def refine_until(
    f: PiecewiseLinearPath,
    sigma: NoiseCoefficient,
    x0: float,
    n0: int,
    tol: float,
    max_doublings: int,
    method: str = "inductive",
) -> ConvergenceReport:
    """Double ``n`` from ``n0`` until consecutive levels are within ``tol``."""
    if not tol > 0:
        raise DomainError("tol must be positive")
    _check_level(n0)
    levels = [n0]
    gaps = []
    prev = construct(f, sigma, n0, x0, method)
    converged = False
    for k in range(1, max_doublings + 1):
        cur = construct(f, sigma, n0 * 2**k, x0, method)
        levels.append(cur.n)
        gaps.append(sup_distance(prev, cur))
        prev = cur
        if gaps[-1] <= tol:
            converged = True
            break
    return ConvergenceReport(levels, gaps, prev, converged, tol)


# --------------------------------------------------------------------------
# invariant residuals
# --------------------------------------------------------------------------


def invariant_residuals(sol: SchemeSolution, eps_flat: float = 1e-6) -> dict:
    """Residuals of the exact structural identities of a level-n solution.

    Every entry should be (numerically) zero except ``flat_fraction`` which is
    the share of the increase of ``L`` that happens away from ``x + L = 0``.
    """
    n, f, x, L = sol.n, sol.driver, sol.x, sol.L
    ev = sol.event_times
    m = ev.size
    idx = np.arange(1, m + 1)
    out = {}
    out["event_level"] = float(np.max(np.abs(eval_path(x, ev) + idx / n))) if m else 0.0

    s_ev = np.asarray(sol.sigma_used(np.arange(m + 1) / n), dtype=np.float64)
    f_ev = eval_path(f, ev) if m else np.empty(0)
    inc = np.diff(f_ev)
    expected = -1.0 / (n * s_ev[1:m])
    r = np.abs(inc - expected) if m > 1 else np.zeros(1)
    if sol.x0 == 0.0 and m:
        r = np.append(r, abs(f_ev[0] - f.v[0] + 1.0 / (n * s_ev[0])))
    out["driver_increment"] = float(r.max())

    tl = L.t
    rm = running_min(x)
    out["running_min"] = float(np.max(np.abs(eval_path(rm, tl) - L.v)))

    seg = np.searchsorted(ev, f.t, side="right")
    t_start = np.concatenate(([0.0], ev))[seg]
    x_start = eval_path(x, t_start)
    f_start = eval_path(f, t_start)
    pred = x_start + s_ev[seg] * (f.v - f_start)
    out["scaling"] = float(np.max(np.abs(eval_path(x, f.t) - pred)))

    y = eval_path(x, tl) + L.v
    out["positivity"] = float(max(0.0, -y.min()))
    dl = np.diff(L.v)
    off = np.maximum(y[:-1], y[1:]) > eps_flat
    total = L.v[-1]
    out["flat_fraction"] = float(dl[off].sum() / total) if total > 0 else 0.0
    return out


def oscillation_check(
    sol: SchemeSolution, eps: float, n_pairs: int = 2000, seed: int = 0
) -> tuple[float, int]:
    """Largest ratio of observed oscillation to its uniform bound on random pairs.

    Pairs ``s < t`` are drawn among driver knots in ``[0, tau_f(1/K - eps)]``.
    Returns ``(max_ratio, violations)``; a violation is a ratio above 1.
    """
    sigma, f, n = sol.sigma_used, sol.driver, sol.n
    K, _ = sigma.constants()
    cprime = oscillation_constant(sigma, eps)
    g = PiecewiseLinearPath(f.t, f.v + sol.x0)
    horizon = f.T if K == 0 else hitting_time(g, 1.0 / K - eps)
    horizon = f.T if horizon is None else horizon
    k_end = int(np.searchsorted(f.t, horizon, side="right"))
    if k_end < 2:
        return 0.0, 0
    ft, fv = f.t[:k_end], f.v[:k_end]
    norm_f = float(np.max(np.abs(g.v[:k_end])))
    xv = eval_path(sol.x, ft)
    rng = np.random.default_rng(seed)
    i = rng.integers(0, k_end, n_pairs)
    j = rng.integers(0, k_end, n_pairs)
    s_idx, t_idx = np.minimum(i, j), np.maximum(i, j)
    worst, bad = 0.0, 0
    for a, b in zip(s_idx, t_idx):
        if a == b:
            continue
        osc = float(np.max(np.abs(fv[a : b + 1] - fv[a])))
        bound = 4 * K * norm_f * (1.0 / n + cprime * osc) + cprime * osc
        obs = abs(xv[b] - xv[a])
        ratio = obs / bound if bound > 0 else (0.0 if obs == 0 else math.inf)
        worst = max(worst, ratio)
        bad += ratio > 1.0
    return worst, bad
