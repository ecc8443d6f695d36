"""Power-law noise ``(1 - l)^p``: the time at which the local time reaches 1.

Once ``L`` reaches 1 the noise vanishes and the reflected path is
deterministic.  With ``S_p(a) = int_0^a dl / sigma_p(l)`` the local time
obeys ``L(tau_f(S_p(a))) = a``, so that time equals the first passage of the
driver's running minimum through ``S_p(1-)``: finite when ``p < 1``, never
when ``p >= 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .errors import ConfigurationError, DomainError
from .noise import TruncatedPowerLaw
from .paths import (
    BrownianSampler,
    PiecewiseLinearPath,
    depth,
    first_passage,
    hitting_time,
    restrict,
    sample_brownian,
)
from .reflected import ReflectedPath
from .scheme import SchemeSolution, construct_inductive


def _check_p(p: float) -> None:
    if not p >= 0:
        raise DomainError("p must be >= 0")


def S_p(p: float, alpha):
    """``int_0^alpha dl / (1 - l)^p`` for ``0 <= alpha < 1``."""
    _check_p(p)
    a = np.asarray(alpha, dtype=np.float64)
    if np.any(a < 0) or np.any(a >= 1) or np.any(np.isnan(a)):
        raise DomainError("alpha must lie in [0, 1); use S_p_limit for alpha -> 1")
    if p == 1:
        out = -np.log1p(-a)
    else:
        out = -np.expm1((1.0 - p) * np.log1p(-a)) / (1.0 - p)
    return float(out) if out.ndim == 0 else out


def S_p_residual(p: float, r):
    """``S_p(1 - r)`` for ``0 < r <= 1``, evaluated from ``r`` without forming ``1 - r``.

    The inverse of :func:`residual_after`; keeps full accuracy for tiny ``r``.
    """
    _check_p(p)
    r = np.asarray(r, dtype=np.float64)
    if np.any(~(r > 0)) or np.any(r > 1):
        raise DomainError("r must lie in (0, 1]")
    if p == 1:
        out = -np.log(r)
    else:
        out = -np.expm1((1.0 - p) * np.log(r)) / (1.0 - p)
    return float(out) if out.ndim == 0 else out


def S_p_limit(p: float) -> float:
    """``S_p(1-)``: ``1/(1-p)`` for ``p < 1``, ``inf`` otherwise."""
    _check_p(p)
    return 1.0 / (1.0 - p) if p < 1 else math.inf


def residual_after(p: float, s):
    """``1 - S_p^{-1}(s)``: the local time still missing once the driver depth is ``s``.

    Zero once ``s >= S_p(1-)``.  Written without the subtraction from 1 so that
    tiny residuals (``p >= 1``, deep drivers) keep their relative accuracy.
    """
    _check_p(p)
    s = np.asarray(s, dtype=np.float64)
    if np.any(s < 0):
        raise DomainError("depth must be >= 0")
    if p == 1:
        out = np.exp(-s)
    else:
        base = np.maximum(1.0 - (1.0 - p) * s, 0.0)
        with np.errstate(divide="ignore"):
            out = np.where(base > 0, np.exp(np.log(np.where(base > 0, base, 1.0)) / (1.0 - p)), 0.0)
    return float(out) if out.ndim == 0 else out


def S_p_inverse(p: float, s):
    """Local time reached when the driver's running minimum equals ``s``; capped at 1."""
    return 1.0 - residual_after(p, s)


def laplace_reference(p: float, lam: float) -> float:
    """``E exp(-lam tau_p) = exp(-sqrt(2 lam) / (1 - p))``."""
    _check_p(p)
    if p >= 1:
        raise DomainError("tau_p is infinite for p >= 1")
    if not lam > 0:
        raise DomainError("lambda must be positive")
    return math.exp(-math.sqrt(2.0 * lam) / (1.0 - p))


def levy_cdf(a: float, t):
    """``P(tau_B(a) <= t) = erfc(a / sqrt(2 t))`` for Brownian first passage below ``-a``."""
    if not a > 0:
        raise DomainError("a must be positive")
    tt = np.asarray(t, dtype=np.float64)
    if np.any(tt < 0):
        raise DomainError("t must be >= 0")
    with np.errstate(divide="ignore"):
        out = np.where(tt > 0, erfc(a / np.sqrt(np.where(tt > 0, tt, 1.0) * 2.0)), 0.0)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DeterminacyConfig:
    """Exponent, truncation ladder and scheme level.

    Parameters
    ----------
    p : float
        Exponent of the noise ``(1 - l)^p``.
    delta_ladder : tuple of float, optional
        Explicit strictly decreasing truncation levels in ``(0, 1)``.  When
        omitted the ladder is ``1/k`` for ``k = 2..k_max``.
    k_max : int
        Depth of the default ladder.
    n : int
        Level of the scheme run on each rung.
    """

    p: float
    delta_ladder: tuple | None = None
    k_max: int = 64
    n: int = 1024

    def __post_init__(self):
        if not self.p >= 0:
            raise ConfigurationError("p must be >= 0")
        if isinstance(self.n, bool) or not isinstance(self.n, int) or self.n < 1:
            raise ConfigurationError("scheme level n must be an integer >= 1")
        if self.delta_ladder is not None:
            lad = tuple(float(d) for d in self.delta_ladder)
            if not lad:
                raise ConfigurationError("delta ladder is empty")
            if not all(0 < d < 1 for d in lad):
                raise ConfigurationError("ladder values must lie in (0, 1)")
            if any(b >= a for a, b in zip(lad, lad[1:])):
                raise ConfigurationError("ladder must be strictly decreasing")
            object.__setattr__(self, "delta_ladder", lad)
        elif isinstance(self.k_max, bool) or not isinstance(self.k_max, int) or self.k_max < 2:
            raise ConfigurationError("k_max must be an integer >= 2")

    @property
    def rungs(self) -> int:
        return len(self.delta_ladder) if self.delta_ladder is not None else self.k_max - 1

    def delta(self, k: int) -> float:
        """Truncation level of rung ``k`` (``k = 0`` is the first rung)."""
        if not 0 <= k < self.rungs:
            raise ConfigurationError(f"rung {k} outside the ladder")
        return self.delta_ladder[k] if self.delta_ladder is not None else 1.0 / (k + 2)

    def first_rung_below(self, r: float) -> int | None:
        """First rung with ``delta < r``, or None if the ladder never gets there."""
        if self.delta_ladder is not None:
            hits = [k for k, d in enumerate(self.delta_ladder) if d < r]
            return hits[0] if hits else None
        if r <= 0:
            return None
        k = min(max(0, int(math.floor(1.0 / r)) - 1), self.rungs)
        while k < self.rungs and not self.delta(k) < r:
            k += 1
        while k > 0 and self.delta(k - 1) < r:
            k -= 1
        return k if k < self.rungs else None


@dataclass(frozen=True)
class TauSample:
    """One determinacy time.

    ``tau`` is None when the local time has not reached 1 by the horizon.
    ``L_at_T`` and ``residual = 1 - L_at_T`` describe the state at ``T``
    through the time-change identity, exact for the sampled driver; the
    residual is computed directly so that it keeps its relative accuracy when
    tiny.  ``exhausted`` marks that ``L`` reached 1 before ``T``, after which
    the path is frozen at 0.

    Scheme samples also carry the rung that was run, its truncation level
    and ``scheme_L``, the level-``n`` solution's ``L(T)``, which is accurate
    to about ``1/n``.  A rung that covers ``T`` certifies
    ``L(T) <= 1 - rung_delta``.  ``ladder_exhausted`` marks a run whose
    deepest rung stops before ``T``.
    """

    path_index: int
    tau: float | None
    method: str
    L_at_T: float
    residual: float
    exhausted: bool
    rung: int | None = None
    rung_delta: float | None = None
    ladder_exhausted: bool = False
    scheme_L: float | None = None

    @property
    def censored(self) -> bool:
        return self.tau is None


def sample_tau_direct(p: float, sampler: BrownianSampler, path_index: int) -> TauSample:
    """Determinacy time as the first passage of the driver through ``S_p(1-)``."""
    return sample_tau_direct_many([p], sampler, path_index)[0]


def sample_tau_direct_many(ps, sampler: BrownianSampler, path_index: int) -> list[TauSample]:
    """Several exponents on the same driver in one streaming pass."""
    ps = [float(p) for p in ps]
    for p in ps:
        _check_p(p)
        if p >= 1:
            raise DomainError("the direct method needs p < 1")
    lv = np.array([S_p_limit(p) for p in ps])
    order = np.argsort(lv, kind="stable")
    times, d_T = first_passage(sampler, path_index, lv[order])
    out = [None] * len(ps)
    for j, k in enumerate(order):
        p, tk = ps[k], times[j]
        if np.isnan(tk):
            r = residual_after(p, d_T)
            out[k] = TauSample(path_index, None, "direct", 1.0 - r, r, False)
        else:
            out[k] = TauSample(path_index, float(tk), "direct", 1.0, 0.0, True)
    return out


def rung_solution(
    cfg: DeterminacyConfig, f: PiecewiseLinearPath, k: int
) -> tuple[SchemeSolution, float, bool]:
    """Scheme solution for rung ``k`` on the prefix where its truncation is inactive.

    Returns ``(solution, end, covers_horizon)``.  The prefix ends when the
    driver's running minimum passes ``S_p(1 - delta_k)``, where the local time
    reaches ``1 - delta_k``.
    """
    d = cfg.delta(k)
    level = S_p_residual(cfg.p, d)
    end = hitting_time(f, level)
    covers = end is None
    g = f if covers else restrict(f, end)
    sol = construct_inductive(g, TruncatedPowerLaw(cfg.p, d), cfg.n, 0.0)
    return sol, (f.T if covers else end), covers


def sample_tau_scheme(
    cfg: DeterminacyConfig,
    sampler: BrownianSampler,
    path_index: int,
    driver: PiecewiseLinearPath | None = None,
) -> TauSample:
    """Determinacy time from the truncation ladder run through the scheme.

    The rung run is the first whose truncation stays inactive up to ``T``;
    when the local time reaches 1 before ``T`` no rung does, the deepest rung
    is run and ``tau`` is the limit of the rungs' validity ends, which is
    the passage of the driver through ``S_p(1-)``.
    """
    f = sample_brownian(sampler, path_index) if driver is None else driver
    p = cfg.p
    d_T = depth(f)
    r_T = residual_after(p, d_T)
    k = cfg.first_rung_below(r_T) if r_T > 0 else None
    if k is not None:
        sol, _, covers = rung_solution(cfg, f, k)
        if not covers:  # rounding at the boundary of the rung's range
            k += 1
            if k < cfg.rungs:
                sol, _, covers = rung_solution(cfg, f, k)
        if covers:
            return TauSample(
                path_index, None, "scheme", 1.0 - r_T, r_T, False, k, cfg.delta(k), False, float(sol.L.v[-1])
            )
    deepest = cfg.rungs - 1
    sol, end, _ = rung_solution(cfg, f, deepest)
    tau = hitting_time(f, S_p_limit(p)) if p < 1 else None
    d_last = cfg.delta(deepest)
    if tau is not None:
        return TauSample(path_index, tau, "scheme", 1.0, 0.0, True, deepest, d_last, False, float(sol.L.v[-1]))
    return TauSample(
        path_index, None, "scheme", 1.0 - r_T, r_T, False, deepest, d_last, True, float(sol.L.v[-1])
    )


def freeze_after(rp: ReflectedPath, tau: float) -> ReflectedPath:
    """Set ``Y = 0`` from ``tau`` on and hold ``L`` and ``X`` at their values at ``tau``."""
    t = rp.Y.t
    if not 0 <= tau <= rp.T:
        raise DomainError("tau outside the path horizon")
    y_tau = float(np.interp(tau, t, rp.Y.v))
    tt = np.union1d(t, [tau])
    keep = tt <= tau
    L = np.where(keep, np.interp(tt, t, rp.L.v), np.interp(tau, t, rp.L.v))
    X = np.where(keep, np.interp(tt, t, rp.X.v), np.interp(tau, t, rp.X.v))
    Y = np.where(keep, np.interp(tt, t, rp.Y.v), 0.0)
    Y[tt == tau] = y_tau
    return ReflectedPath(
        PiecewiseLinearPath(tt, Y), PiecewiseLinearPath(tt, L), PiecewiseLinearPath(tt, X), rp.sigma_used
    )
