"""Piecewise-linear paths, running minima, hitting times and Brownian drivers."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .csvio import read_columns, write_columns
from .errors import ConfigurationError, DomainError
from .rng import LEVEL_SLOTS, per_path_seed, stream


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PiecewiseLinearPath:
    """A continuous function on ``[0, T]`` given by its knots.

    Between knots the path is the linear interpolant; there is no other data.
    """

    t: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        t = _frozen(self.t)
        v = _frozen(self.v)
        if t.ndim != 1 or t.shape != v.shape or t.size == 0:
            raise DomainError("knot times and values must be 1-d arrays of equal, nonzero length")
        if t[0] != 0.0:
            raise DomainError("first knot time must be 0")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise DomainError("knot times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise DomainError("knots must be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_knots(cls, knots) -> PiecewiseLinearPath:
        knots = list(knots)
        return cls([k[0] for k in knots], [k[1] for k in knots])

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @property
    def knots(self) -> list[tuple[float, float]]:
        return list(zip(self.t.tolist(), self.v.tolist()))

    def __len__(self) -> int:
        return self.t.size

    def __call__(self, s):
        return eval_path(self, s)

    def same_knots(self, other: PiecewiseLinearPath) -> bool:
        return np.array_equal(self.t, other.t) and np.array_equal(self.v, other.v)

    def to_csv(self, target) -> None:
        write_columns(target, ("t", "value"), (self.t, self.v))

    @classmethod
    def from_csv(cls, source) -> PiecewiseLinearPath:
        t, v = read_columns(source, ("t", "value"))
        return cls(t, v)


def eval_path(path: PiecewiseLinearPath, s):
    """Value of ``path`` at time(s) ``s``; exact at knots."""
    arr = np.asarray(s, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > path.T) or np.any(np.isnan(arr)):
        raise DomainError(f"time outside [0, {path.T}]")
    out = np.interp(arr, path.t, path.v)
    return float(out) if out.ndim == 0 else out


def running_min(path: PiecewiseLinearPath) -> PiecewiseLinearPath:
    """Signed running minimum ``M(t) = max(0, max_{s<=t} -g(s))``.

    The output keeps every input knot and adds one knot wherever ``-g``
    overtakes its previous maximum inside a segment.
    """
    t, v = kernels.running_min_kernel(path.t, path.v)
    return PiecewiseLinearPath(t, v)


def hitting_times(path: PiecewiseLinearPath, levels) -> np.ndarray:
    """First times the running minimum strictly exceeds each level (nan if never).

    The crossing is solved on the bracketing segment with one division.
    """
    a = np.asarray(levels, dtype=np.float64)
    if np.any(a < 0.0):
        raise DomainError("hitting levels must be >= 0")
    v = -path.v
    d = np.maximum.accumulate(v)
    k = np.searchsorted(d, a, side="right")
    out = np.full(a.shape, np.nan)
    at0 = k == 0
    out[at0] = path.t[0]
    mid = (k > 0) & (k < d.size)
    km = k[mid]
    out[mid] = path.t[km - 1] + (a[mid] - v[km - 1]) / (v[km] - v[km - 1]) * (path.t[km] - path.t[km - 1])
    return out


def hitting_time(path: PiecewiseLinearPath, a: float) -> float | None:
    """``inf{t : M(t) > a}`` for the signed running minimum ``M``; None if never."""
    if a < 0:
        raise DomainError("hitting level must be >= 0")
    out = hitting_times(path, [a])[0]
    return None if np.isnan(out) else float(out)


def depth(path: PiecewiseLinearPath) -> float:
    """Terminal value of the signed running minimum."""
    return max(0.0, float(-path.v.min()))


def restrict(path: PiecewiseLinearPath, t_end: float) -> PiecewiseLinearPath:
    """The path on ``[0, t_end]``, with a knot added at ``t_end`` if needed."""
    if not 0.0 <= t_end <= path.T:
        raise DomainError("restriction time outside the path horizon")
    k = int(np.searchsorted(path.t, t_end, side="left"))
    if k < path.t.size and path.t[k] == t_end:
        return PiecewiseLinearPath(path.t[: k + 1], path.v[: k + 1])
    return PiecewiseLinearPath(
        np.append(path.t[:k], t_end), np.append(path.v[:k], eval_path(path, t_end))
    )


def union_times(*paths: PiecewiseLinearPath) -> np.ndarray:
    return np.unique(np.concatenate([p.t for p in paths]))


# --------------------------------------------------------------------------
# Brownian drivers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BrownianSampler:
    """Reproducible Brownian paths on a uniform grid with dyadic bridge refinement.

    Parameters
    ----------
    master_seed : int
        Root seed; per-path seeds are derived from it and the path index.
    dt : float
        Coarse grid step.  The last step is shortened to land on ``T``.
    T : float
        Horizon.
    refine_depth : int
        Number of Brownian-bridge midpoint levels applied to every coarse step.
    chunk : int
        Coarse steps per random-stream cell.  Part of the reproducibility key.
    """

    master_seed: int
    dt: float
    T: float
    refine_depth: int = 0
    chunk: int = 2048

    def __post_init__(self):
        if not (self.dt > 0 and self.T > 0):
            raise ConfigurationError("dt and T must be positive")
        if self.dt >= self.T:
            raise ConfigurationError("dt must be smaller than T")
        if not 0 <= self.refine_depth < LEVEL_SLOTS:
            raise ConfigurationError(f"refine_depth must lie in [0, {LEVEL_SLOTS - 1}]")
        if self.chunk < 1:
            raise ConfigurationError("chunk must be >= 1")

    @cached_property
    def n_steps(self) -> int:
        return int(math.ceil(self.T / self.dt - 1e-9))

    @property
    def n_chunks(self) -> int:
        return -(-self.n_steps // self.chunk)

    @property
    def fine_dt(self) -> float:
        return self.dt / 2**self.refine_depth

    def coarse_times(self, k0: int = 0, k1: int | None = None) -> np.ndarray:
        """Coarse grid times for indices ``k0..k1`` inclusive."""
        k1 = self.n_steps if k1 is None else k1
        t = np.arange(k0, k1 + 1, dtype=np.float64) * self.dt
        if k1 == self.n_steps:
            t[-1] = self.T
        return t

    def chunk_bounds(self, c: int) -> tuple[int, int]:
        return c * self.chunk, min((c + 1) * self.chunk, self.n_steps)

    def seed_for(self, path_index: int) -> int:
        return per_path_seed(self.master_seed, path_index)


def fine_times(coarse_t: np.ndarray, depth: int) -> np.ndarray:
    """Knot times after ``depth`` dyadic subdivisions of every coarse step."""
    if depth == 0:
        return coarse_t.copy()
    r = 2**depth
    h = np.diff(coarse_t)
    frac = np.arange(r, dtype=np.float64) / r
    inner = (coarse_t[:-1, None] + frac[None, :] * h[:, None]).ravel()
    return np.append(inner, coarse_t[-1])


def _coarse_chunk(sampler: BrownianSampler, seed: int, c: int, v_start: float):
    k0, k1 = sampler.chunk_bounds(c)
    t = sampler.coarse_times(k0, k1)
    z = stream(seed, c, 0).standard_normal(k1 - k0)
    inc = np.sqrt(np.diff(t)) * z
    vals = np.cumsum(np.concatenate(([v_start], inc)))
    return t, vals


def _refine_chunk(seed: int, c: int, coarse_t: np.ndarray, vals: np.ndarray, d_from: int, d_to: int):
    h = np.diff(coarse_t)
    m = h.size
    for level in range(d_from + 1, d_to + 1):
        r = 2 ** (level - 1)
        z = stream(seed, c, level).standard_normal(m * r)
        sub_len = np.repeat(h / r, r)
        vals = kernels.bridge_level(vals, z, sub_len)
    return vals


def sample_brownian(sampler: BrownianSampler, path_index: int) -> PiecewiseLinearPath:
    """Materialize path ``path_index`` on the refined grid; starts at 0."""
    seed = sampler.seed_for(path_index)
    d = sampler.refine_depth
    times, values = [np.zeros(1)], [np.zeros(1)]
    v_start = 0.0
    for c in range(sampler.n_chunks):
        t, vals = _coarse_chunk(sampler, seed, c, v_start)
        v_start = vals[-1]
        if d:
            vals = _refine_chunk(seed, c, t, vals, 0, d)
        times.append(fine_times(t, d)[1:])
        values.append(vals[1:])
    return PiecewiseLinearPath(np.concatenate(times), np.concatenate(values))


def refine_bridge(
    path: PiecewiseLinearPath, sampler: BrownianSampler, levels: int, path_index: int = 0
) -> PiecewiseLinearPath:
    """Add ``levels`` further bridge-midpoint levels to a sampled path.

    ``path`` must lie on the sampler's grid at some depth ``d0``; the result
    equals sampling the same index at depth ``d0 + levels``.
    """
    if levels < 0:
        raise ConfigurationError("levels must be >= 0")
    if levels == 0:
        return path
    if path.T != sampler.T:
        raise ConfigurationError("path horizon does not match the sampler")
    intervals = len(path) - 1
    ratio, rem = divmod(intervals, sampler.n_steps)
    d0 = ratio.bit_length() - 1
    if rem or ratio < 1 or 2**d0 != ratio:
        raise ConfigurationError("path is not on the sampler's dyadic grid")
    if d0 + levels >= LEVEL_SLOTS:
        raise ConfigurationError("refinement depth exceeds the supported number of levels")
    if not np.array_equal(path.t, fine_times(sampler.coarse_times(), d0)):
        raise ConfigurationError("path knot times do not match the sampler grid")
    seed = sampler.seed_for(path_index)
    r0 = 2**d0
    times, values = [np.zeros(1)], [path.v[:1]]
    for c in range(sampler.n_chunks):
        k0, k1 = sampler.chunk_bounds(c)
        t = sampler.coarse_times(k0, k1)
        vals = _refine_chunk(seed, c, t, path.v[k0 * r0 : k1 * r0 + 1], d0, d0 + levels)
        times.append(fine_times(t, d0 + levels)[1:])
        values.append(vals[1:])
    return PiecewiseLinearPath(np.concatenate(times), np.concatenate(values))


def first_passage(sampler: BrownianSampler, path_index: int, levels, need_depth: bool = False):
    """Hitting times of sorted ``levels`` by path ``path_index``, evaluated lazily.

    Produces the same numbers as ``hitting_times(sample_brownian(...), levels)``
    without materializing the path: bridge refinement is generated only for
    chunks whose coarse values come within ``8 sqrt(dt)`` of the running
    minimum, which is where a refined point can set a new minimum (the
    probability of a miss is below ``exp(-128)`` per step).

    Returns ``(times, depth_T)``; ``times`` holds nan for levels not reached by
    ``T`` and ``depth_T`` is the terminal running-minimum depth, or nan when
    every level was hit and ``need_depth`` is false.
    """
    lv = np.asarray(levels, dtype=np.float64)
    if lv.ndim != 1 or np.any(np.diff(lv) < 0) or np.any(lv < 0):
        raise DomainError("levels must be a sorted 1-d array of nonnegative values")
    seed = sampler.seed_for(path_index)
    d = sampler.refine_depth
    margin = 8.0 * math.sqrt(sampler.dt)
    out = np.full(lv.size, np.nan)
    dep, ptr = 0.0, 0
    v_start = 0.0
    finished = True
    for c in range(sampler.n_chunks):
        if ptr == lv.size and not need_depth:
            finished = False
            break
        t, vals = _coarse_chunk(sampler, seed, c, v_start)
        v_start = vals[-1]
        if d == 0:
            dep, ptr = kernels.scan_levels(t, vals, dep, lv, ptr, out)
        elif -vals.min() + margin > dep:
            fine = _refine_chunk(seed, c, t, vals, 0, d)
            dep, ptr = kernels.scan_levels(fine_times(t, d), fine, dep, lv, ptr, out)
    return out, (float(dep) if finished else math.nan)
