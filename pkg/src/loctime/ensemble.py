"""Reproducible Monte Carlo over path indices and its reductions.

Every per-path task is a pure function of its index, and results are sorted
by index before any reduction, so outputs never depend on the worker count
or the completion order.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .rng import per_path_seed

__all__ = [
    "per_path_seed",
    "EnsembleRun",
    "run_ensemble",
    "StatRecord",
    "summarize",
    "LaplaceEstimate",
    "estimate_laplace",
    "ECDF",
    "ecdf",
    "ks_distance",
    "EnsembleReport",
]


# --------------------------------------------------------------------------
# execution
# --------------------------------------------------------------------------


@dataclass
class EnsembleRun:
    """Per-index results in index order; failed indices hold None."""

    indices: list
    values: list
    failures: list = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def num_paths(self) -> int:
        return len(self.indices)

    @property
    def complete(self) -> bool:
        return not self.failures

    def ok_values(self) -> list:
        return [v for v in self.values if v is not None]


def _run_batch(task, indices):
    out = []
    for i in indices:
        try:
            out.append((i, True, task(i)))
        except Exception as exc:  # recorded per index, never fatal to the run
            out.append((i, False, f"{type(exc).__name__}: {exc}"))
    return out


def run_ensemble(task, num_paths: int, workers: int = 1, start: int = 0, batch: int | None = None) -> EnsembleRun:
    """Apply ``task`` to path indices ``start .. start + num_paths - 1``.

    Parameters
    ----------
    task : callable
        ``task(path_index) -> value``.  Must be picklable when ``workers > 1``
        (a module-level function or a ``functools.partial`` of one).
    num_paths : int
        Number of indices, at least 1.
    workers : int
        Process count; 1 runs inline.
    batch : int, optional
        Indices per submitted job.  Only affects scheduling.
    """
    if isinstance(num_paths, bool) or not isinstance(num_paths, (int, np.integer)) or num_paths < 1:
        raise UsageError("num_paths must be an integer >= 1")
    if workers < 1:
        raise UsageError("workers must be >= 1")
    idx = list(range(start, start + int(num_paths)))
    t0 = time.perf_counter()
    if workers == 1:
        rows = _run_batch(task, idx)
    else:
        size = batch or max(1, math.ceil(len(idx) / (4 * workers)))
        chunks = [idx[k : k + size] for k in range(0, len(idx), size)]
        rows = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_run_batch, [task] * len(chunks), chunks):
                rows.extend(part)
    rows.sort(key=lambda r: r[0])
    values = [r[2] if r[1] else None for r in rows]
    failures = [(r[0], r[2]) for r in rows if not r[1]]
    return EnsembleRun(idx, values, failures, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# reductions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StatRecord:
    """Mean and standard error; ``stderr`` is None for a single sample."""

    n: int
    mean: float
    stderr: float | None

    def within(self, target: float, k: float = 3.0, extra: float = 0.0) -> bool:
        if self.stderr is None:
            return abs(self.mean - target) <= extra
        return abs(self.mean - target) <= k * self.stderr + extra

    def as_dict(self) -> dict:
        return {"n": self.n, "mean": self.mean, "stderr": self.stderr}


def summarize(values) -> StatRecord:
    """Mean and ``sd / sqrt(N)`` with the unbiased sample deviation."""
    a = np.asarray(values, dtype=np.float64)
    if a.size == 0:
        raise UsageError("no values to summarize")
    mean = float(np.mean(a))
    se = float(np.std(a, ddof=1) / math.sqrt(a.size)) if a.size > 1 else None
    return StatRecord(int(a.size), mean, se)


@dataclass(frozen=True)
class LaplaceEstimate:
    """Estimate of ``E exp(-lam tau)`` from horizon-censored samples.

    Censored samples are counted as 0 in ``mean`` and ``lower`` and as
    ``exp(-lam T)`` in ``upper``; the true value lies in ``[lower, upper]``
    up to Monte Carlo error.  ``mean`` is None when every sample is censored.
    """

    lam: float
    mean: float | None
    stderr: float | None
    lower: float
    upper: float
    n_total: int
    n_censored: int

    def as_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "mean": self.mean,
            "stderr": self.stderr,
            "lower": self.lower,
            "upper": self.upper,
            "n_total": self.n_total,
            "n_censored": self.n_censored,
        }


def _tau_value(s):
    tau = getattr(s, "tau", s)
    return None if tau is None or (isinstance(tau, float) and math.isinf(tau)) else float(tau)


def estimate_laplace(taus, lam: float, horizon: float | None = None) -> LaplaceEstimate:
    """Monte Carlo Laplace transform of possibly censored stopping times.

    ``taus`` holds TauSample objects or plain numbers, None marking censoring.
    ``horizon`` is needed only to bound the censored contribution.
    """
    if not lam > 0:
        raise UsageError("lambda must be positive")
    vals = [_tau_value(s) for s in taus]
    if not vals:
        raise UsageError("no samples")
    n = len(vals)
    fin = np.array([v for v in vals if v is not None], dtype=np.float64)
    n_cens = n - fin.size
    if n_cens and horizon is None:
        raise UsageError("censored samples need the horizon to bound their contribution")
    tail = math.exp(-lam * horizon) if n_cens else 0.0
    per = np.concatenate((np.exp(-lam * fin), np.zeros(n_cens)))
    lower = float(per.mean())
    upper = lower + n_cens * tail / n
    if fin.size == 0:
        return LaplaceEstimate(lam, None, None, 0.0, upper, n, n_cens)
    se = float(np.std(per, ddof=1) / math.sqrt(n)) if n > 1 else None
    return LaplaceEstimate(lam, lower, se, lower, upper, n, n_cens)


@dataclass(frozen=True)
class ECDF:
    """Right-continuous empirical CDF; censored samples sit at ``+inf``."""

    x: np.ndarray
    n: int

    def __call__(self, s):
        return np.searchsorted(self.x, s, side="right") / self.n

    def left(self, s):
        """``F(s-)``."""
        return np.searchsorted(self.x, s, side="left") / self.n

    def knots(self) -> list[tuple[float, float]]:
        """``(x, F(x))`` at each distinct finite sample."""
        fin = self.x[np.isfinite(self.x)]
        u = np.unique(fin)
        return list(zip(u.tolist(), (np.searchsorted(self.x, u, side="right") / self.n).tolist()))


def ecdf(samples) -> ECDF:
    vals = [_tau_value(s) for s in samples]
    if not vals:
        raise UsageError("ecdf of an empty sample")
    x = np.array([math.inf if v is None else v for v in vals], dtype=np.float64)
    if np.any(np.isnan(x)):
        raise UsageError("nan in samples")
    return ECDF(np.sort(x), x.size)


def ks_distance(F: ECDF, reference_cdf, horizon: float | None = None) -> float:
    """``sup |F_N - G|`` over the finite sample points, from both sides of each jump.

    ``F(x-)`` is compared with ``G(x-)`` when the reference exposes left
    limits (another :class:`ECDF`) and with ``G(x)`` otherwise, so a step
    reference is compared like for like.  With a horizon the gap at ``T`` is
    included too, which accounts for the mass of censored samples.
    """
    pts = np.unique(F.x[np.isfinite(F.x)])
    gaps = [0.0]
    if pts.size:
        g = np.asarray(reference_cdf(pts), dtype=np.float64)
        g_left = np.asarray(reference_cdf.left(pts), dtype=np.float64) if hasattr(reference_cdf, "left") else g
        gaps.append(float(np.max(np.abs(F(pts) - g))))
        gaps.append(float(np.max(np.abs(F.left(pts) - g_left))))
    if horizon is not None:
        gaps.append(abs(float(F(horizon)) - float(reference_cdf(horizon))))
    return max(gaps)


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------


@dataclass
class EnsembleReport:
    """Structured summary with a stable field order.

    ``wall_clock`` is kept on the object but left out of :meth:`to_json` by
    default so that serialized reports are byte-reproducible.
    """

    experiment: str
    num_paths: int
    master_seed: int
    config: dict
    statistics: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def complete(self) -> bool:
        return not self.failures

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "experiment": self.experiment,
            "num_paths": self.num_paths,
            "complete": self.complete,
            "master_seed": self.master_seed,
            "seeding": "splitmix64 per-path seed, Philox stream per (chunk, level)",
            "config": self.config,
            "statistics": self.statistics,
            "failures": [{"path_index": i, "error": m} for i, m in self.failures],
        }
        if include_timing:
            d["wall_clock_seconds"] = self.wall_clock
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(_clean(self.to_dict(include_timing)), indent=2, allow_nan=False) + "\n"

    def write(self, target, include_timing: bool = False) -> None:
        text = self.to_json(include_timing)
        if hasattr(target, "write"):
            target.write(text)
        else:
            with open(target, "w", encoding="utf-8") as fh:
                fh.write(text)


def _clean(obj):
    """Plain-JSON view: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return obj
