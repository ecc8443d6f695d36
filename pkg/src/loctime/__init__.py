"""Reflected diffusions whose noise depends on their own local time.

The level-n scheme turns a continuous driver into the pair ``(x, L)``; the
reflected path is ``Y = x + L``.  For power-law noise ``(1 - L)^p`` the local
time reaches 1 in finite time when ``p < 1``, after which the path is
deterministic.
"""
from ._accel import backend
from .determinacy import (
    DeterminacyConfig,
    S_p,
    S_p_limit,
    S_p_residual,
    TauSample,
    laplace_reference,
    levy_cdf,
    sample_tau_direct,
    sample_tau_scheme,
)
from .ensemble import ecdf, estimate_laplace, ks_distance, per_path_seed, run_ensemble
from .errors import ConfigurationError, DomainError, LoctimeError, UsageError
from .noise import Affine, Constant, NoiseCoefficient, PowerLaw, Tabulated, TruncatedPowerLaw
from .paths import (
    BrownianSampler,
    PiecewiseLinearPath,
    first_passage,
    hitting_time,
    hitting_times,
    running_min,
    sample_brownian,
)
from .reflected import ReflectedPath, occupation_local_time, realized_qv, reflect, sigma2_integral, tanaka_residual
from .scheme import (
    ConvergenceReport,
    SchemeSolution,
    build_thresholds,
    construct_by_hitting,
    construct_inductive,
    refine_until,
    sup_distance,
)

__version__ = "0.1.0"
