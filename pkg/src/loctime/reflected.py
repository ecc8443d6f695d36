"""Reflected process ``Y = X + L`` and checks of its quadratic variation and local times.

Local times follow the convention in which ``Lambda(t, 0)`` equals the
regulator ``L`` and the occupation formula reads
``int k(Y) sigma^2(L) ds = 2 int k(a) Lambda(t, a) da``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .csvio import write_columns
from .errors import DomainError
from .noise import NoiseCoefficient
from .paths import PiecewiseLinearPath, eval_path, running_min

_GAUSS = 0.5 / math.sqrt(3.0)


@dataclass(frozen=True, eq=False)
class ReflectedPath:
    """``Y``, ``L`` and ``X`` on a common knot set."""

    Y: PiecewiseLinearPath
    L: PiecewiseLinearPath
    X: PiecewiseLinearPath
    sigma_used: NoiseCoefficient

    @property
    def T(self) -> float:
        return self.Y.T


def reflect(sol=None, *, x: PiecewiseLinearPath | None = None, sigma: NoiseCoefficient | None = None) -> ReflectedPath:
    """Skorokhod reflection of a scheme solution, or of a bare path ``x``.

    The knots are those of ``L``, which contain every knot of ``x`` plus the
    points where the running minimum starts to move inside a segment.
    """
    if sol is not None:
        x, L, sigma = sol.x, sol.L, sol.sigma_used
    else:
        if x is None or sigma is None:
            raise DomainError("reflect needs a solution or both x and sigma")
        L = running_min(x)
    t = L.t
    xv = eval_path(x, t)
    X = PiecewiseLinearPath(t, xv)
    return ReflectedPath(PiecewiseLinearPath(t, xv + L.v), L, X, sigma)


def uniform_grid(T: float, grid_dt: float) -> np.ndarray:
    """``0, dt, 2dt, ...`` with the last point moved onto ``T``."""
    if not grid_dt > 0:
        raise DomainError("grid_dt must be positive")
    if grid_dt > T:
        raise DomainError("grid step is coarser than the path horizon")
    k = int(math.ceil(T / grid_dt - 1e-9))
    g = np.arange(k + 1, dtype=np.float64) * grid_dt
    g[-1] = T
    return g


def realized_qv(X: PiecewiseLinearPath, grid_dt: float) -> PiecewiseLinearPath:
    """Cumulative sum of squared increments of ``X`` over a uniform grid."""
    g = uniform_grid(X.T, grid_dt)
    inc = np.diff(eval_path(X, g))
    return PiecewiseLinearPath(g, np.concatenate(([0.0], np.cumsum(inc * inc))))


def sigma2_integral(L: PiecewiseLinearPath, sigma: NoiseCoefficient) -> PiecewiseLinearPath:
    """``t -> int_0^t sigma(L(s))^2 ds`` by two-point Gauss on every segment of ``L``."""
    t, v = L.t, L.v
    if t.size == 1:
        return PiecewiseLinearPath(t, [0.0])
    h = np.diff(t)
    dv = np.diff(v)
    lo = v[:-1] + (0.5 - _GAUSS) * dv
    hi = v[:-1] + (0.5 + _GAUSS) * dv
    s_lo = sigma(np.maximum(lo, 0.0))
    s_hi = sigma(np.maximum(hi, 0.0))
    seg = 0.5 * h * (s_lo * s_lo + s_hi * s_hi)
    return PiecewiseLinearPath(t, np.concatenate(([0.0], np.cumsum(seg))))


def _window(a: float, eps: float) -> tuple[float, float, float]:
    """Window ``[lo, hi]`` and normalizer for the level-``a`` occupation estimate.

    The occupation integral over the window is divided by twice the part of
    the window lying inside the state space ``[0, inf)``: ``4 eps`` at
    interior levels, ``2 eps`` at the boundary.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    if a < 0:
        raise DomainError("level a must be >= 0")
    lo, hi = a - eps, a + eps
    return lo, hi, 2.0 * (hi - max(lo, 0.0))


def _occupation_on_knots(rp: ReflectedPath, a: float, eps: float) -> np.ndarray:
    lo, hi, norm = _window(a, eps)
    t, y, lv = rp.Y.t, rp.Y.v, rp.L.v
    if t.size == 1:
        return np.zeros(1)
    mid = 0.5 * (lv[:-1] + lv[1:])
    s = rp.sigma_used(mid)
    return kernels.window_occupation(t, y, lo, hi, s * s) / norm


def occupation_local_time(rp: ReflectedPath, a: float, eps: float, grid_dt: float) -> PiecewiseLinearPath:
    """Occupation-density estimate of ``Lambda(t, a)`` sampled on a uniform grid.

    The time ``Y`` spends in ``[a - eps, a + eps]`` is computed exactly on
    every linear piece of ``Y`` and weighted by ``sigma(L)^2``.
    """
    cum = _occupation_on_knots(rp, a, eps)
    g = uniform_grid(rp.T, grid_dt)
    return PiecewiseLinearPath(g, np.interp(g, rp.Y.t, cum))


def tanaka_residual(rp: ReflectedPath, a: float, eps: float, grid_dt: float) -> float:
    """Largest defect of the Ito-Tanaka identity for ``(y - a)^+`` on the output grid.

    The integral ``int 1{Y > a} dY`` is split along ``dY = dX + dL``.  The
    martingale part is the left-endpoint sum over grid increments of ``X``;
    the regulator part is integrated exactly on the knots of ``L``, since a
    grid sum would charge increases of ``L`` to cells that merely start off
    the boundary.
    """
    if a < 0:
        raise DomainError("level a must be >= 0")
    g = uniform_grid(rp.T, grid_dt)
    thr = a + 1e-9
    yg = eval_path(rp.Y, g)
    xg = eval_path(rp.X, g)
    mart = np.concatenate(([0.0], np.cumsum(np.where(yg[:-1] > thr, np.diff(xg), 0.0))))
    yk, lk = rp.Y.v, rp.L.v
    on = np.minimum(yk[:-1], yk[1:]) > thr
    reg_k = np.concatenate(([0.0], np.cumsum(np.where(on, np.diff(lk), 0.0))))
    reg = np.interp(g, rp.Y.t, reg_k)
    lam = np.interp(g, rp.Y.t, _occupation_on_knots(rp, a, eps))
    lhs = np.maximum(yg - a, 0.0) - max(yg[0] - a, 0.0)
    return float(np.max(np.abs(lhs - mart - reg - lam)))


def emit_csv(rp: ReflectedPath, target, grid_dt: float, eps: float) -> None:
    """Write ``t,Y,L,QV,Sigma2Int,Lambda0`` on a uniform grid."""
    g = uniform_grid(rp.T, grid_dt)
    qv = realized_qv(rp.X, grid_dt)
    s2 = sigma2_integral(rp.L, rp.sigma_used)
    lam = occupation_local_time(rp, 0.0, eps, grid_dt)
    write_columns(
        target,
        ("t", "Y", "L", "QV", "Sigma2Int", "Lambda0"),
        (g, eval_path(rp.Y, g), eval_path(rp.L, g), qv.v, eval_path(s2, g), lam.v),
    )
