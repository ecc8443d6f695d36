"""Noise coefficients as functions of local time."""
from __future__ import annotations

import math

import numpy as np

from .errors import ConfigurationError, DomainError
from .paths import PiecewiseLinearPath


class NoiseCoefficient:
    """Base class: a function of local time with Lipschitz constant and lower bound.

    Subclasses implement ``_eval`` on a float array that has already passed
    the domain check.
    """

    kind: str = ""
    lipschitz_K: float
    lower_bound_delta: float

    def __call__(self, ell):
        arr = np.asarray(ell, dtype=np.float64)
        if np.any(arr < 0.0) or np.any(np.isnan(arr)):
            raise DomainError("local time must be >= 0")
        hi = self.domain_max
        if hi is not None and np.any(arr > hi):
            raise DomainError(f"local time outside tabulated domain [0, {hi}]")
        out = self._eval(arr)
        return float(out) if out.ndim == 0 else out

    eval = __call__

    @property
    def domain_max(self) -> float | None:
        return None

    def constants(self) -> tuple[float, float]:
        """``(K, delta)``: Lipschitz constant and lower bound."""
        return self.lipschitz_K, self.lower_bound_delta

    def describe(self) -> dict:
        raise NotImplementedError

    def __eq__(self, other):
        return type(self) is type(other) and self.describe() == other.describe()

    def __hash__(self):
        return hash(repr(self.describe()))

    def __repr__(self):
        return f"{type(self).__name__}({self.describe()})"


class Constant(NoiseCoefficient):
    kind = "constant"

    def __init__(self, c: float):
        if not c > 0:
            raise ConfigurationError("constant noise must be positive")
        self.c = float(c)
        self.lipschitz_K = 0.0
        self.lower_bound_delta = self.c

    def _eval(self, ell):
        return np.full(ell.shape, self.c)

    def describe(self):
        return {"kind": self.kind, "c": self.c}


class Affine(NoiseCoefficient):
    """``intercept + slope * ell``; the slope must be nonnegative on ``[0, inf)``."""

    kind = "affine"

    def __init__(self, intercept: float, slope: float):
        if not intercept > 0:
            raise ConfigurationError("affine intercept must be positive")
        if slope < 0:
            raise ConfigurationError("affine slope must be >= 0 to stay bounded away from zero")
        self.intercept = float(intercept)
        self.slope = float(slope)
        self.lipschitz_K = self.slope
        self.lower_bound_delta = self.intercept

    def _eval(self, ell):
        return self.intercept + self.slope * ell

    def describe(self):
        return {"kind": self.kind, "intercept": self.intercept, "slope": self.slope}


class PowerLaw(NoiseCoefficient):
    """``(1 - ell)^p`` on ``[0, 1]`` and 0 beyond; neither Lipschitz nor bounded below."""

    kind = "power"

    def __init__(self, p: float):
        if not p >= 0:
            raise ConfigurationError("power p must be >= 0")
        self.p = float(p)
        self.lipschitz_K = self.p if self.p >= 1 else math.inf
        self.lower_bound_delta = 0.0

    def _eval(self, ell):
        inside = ell <= 1.0
        base = np.where(inside, 1.0 - ell, 0.0)
        return np.where(inside, base**self.p, 0.0)

    def describe(self):
        return {"kind": self.kind, "p": self.p}


class TruncatedPowerLaw(NoiseCoefficient):
    """``(1 - ell)^p`` on ``[0, 1 - delta]``, frozen at ``delta^p`` afterwards."""

    kind = "truncated_power"

    def __init__(self, p: float, delta: float):
        if not p >= 0:
            raise ConfigurationError("power p must be >= 0")
        if not 0 < delta <= 1:
            raise ConfigurationError("truncation delta must lie in (0, 1]")
        self.p = float(p)
        self.delta = float(delta)
        if self.p == 0:
            self.lipschitz_K = 0.0
        elif self.p >= 1:
            self.lipschitz_K = self.p
        else:
            self.lipschitz_K = self.p * self.delta ** (self.p - 1.0)
        self.lower_bound_delta = self.delta**self.p

    def _eval(self, ell):
        # branch on ell itself so the cutoff point 1 - delta still takes the power-law value
        return np.where(ell <= 1.0 - self.delta, np.maximum(1.0 - ell, 0.0) ** self.p, self.delta**self.p)

    def describe(self):
        return {"kind": self.kind, "p": self.p, "delta": self.delta}


class Tabulated(NoiseCoefficient):
    """Piecewise-linear table over ``[0, ell_max]``; constants derived from the knots."""

    kind = "tabulated"

    def __init__(self, table: PiecewiseLinearPath):
        if not np.all(table.v > 0):
            raise ConfigurationError("tabulated noise values must be positive")
        self.table = table
        if len(table) > 1:
            slopes = np.diff(table.v) / np.diff(table.t)
            self.lipschitz_K = float(np.max(np.abs(slopes)))
        else:
            self.lipschitz_K = 0.0
        self.lower_bound_delta = float(table.v.min())

    @property
    def domain_max(self):
        return self.table.T

    def _eval(self, ell):
        return np.interp(ell, self.table.t, self.table.v)

    def describe(self):
        return {"kind": self.kind, "knots": [[a, b] for a, b in self.table.knots]}


_KINDS = {
    "constant": (Constant, ("c",)),
    "affine": (Affine, ("intercept", "slope")),
    "power": (PowerLaw, ("p",)),
    "truncated_power": (TruncatedPowerLaw, ("p", "delta")),
}


def make(descriptor: dict) -> NoiseCoefficient:
    """Build a coefficient from a descriptor such as ``{"kind": "power", "p": 0.5}``."""
    if not isinstance(descriptor, dict) or "kind" not in descriptor:
        raise ConfigurationError("noise descriptor must be a mapping with a 'kind' key")
    kind = descriptor["kind"]
    params = {k: v for k, v in descriptor.items() if k != "kind"}
    if kind == "tabulated":
        if set(params) != {"knots"}:
            raise ConfigurationError("tabulated noise takes exactly one key: 'knots'")
        try:
            table = PiecewiseLinearPath.from_knots(params["knots"])
        except (TypeError, IndexError, ValueError) as exc:
            raise ConfigurationError(f"bad tabulated knots: {exc}") from exc
        return Tabulated(table)
    if kind not in _KINDS:
        raise ConfigurationError(f"unknown noise kind {kind!r}")
    cls, names = _KINDS[kind]
    if set(params) != set(names):
        raise ConfigurationError(f"noise kind {kind!r} takes keys {list(names)}, got {sorted(params)}")
    for name in names:
        if isinstance(params[name], bool) or not isinstance(params[name], (int, float)):
            raise ConfigurationError(f"noise parameter {name!r} must be a number")
    return cls(*(float(params[n]) for n in names))


def require_positive_floor(sigma: NoiseCoefficient) -> None:
    if not sigma.lower_bound_delta > 0:
        raise DomainError("noise coefficient must be bounded away from zero (delta > 0)")
