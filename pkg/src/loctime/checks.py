"""Fast invariant suite behind ``loctime checks``.

Each check returns a :class:`CheckResult`; sizes are kept small so the whole
suite runs in well under a minute.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.integrate import quad

from . import determinacy as det
from . import ensemble as ens
from .noise import Affine, Constant, PowerLaw, Tabulated, TruncatedPowerLaw
from .paths import (
    BrownianSampler,
    PiecewiseLinearPath,
    eval_path,
    first_passage,
    hitting_time,
    hitting_times,
    refine_bridge,
    running_min,
    sample_brownian,
)
from .reflected import realized_qv, reflect, sigma2_integral
from .scheme import (
    construct_by_hitting,
    construct_inductive,
    construction_gap,
    invariant_residuals,
    oscillation_check,
    refine_until,
    sup_distance,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _tau_of_index(sampler, i):
    return det.sample_tau_direct(0.0, sampler, i).tau


def _paths(seed):
    out = []
    g = PiecewiseLinearPath.from_knots([(0, 0), (1, -1), (2, -0.5), (3, -2)])
    m = running_min(g)
    ok = abs(eval_path(m, 7 / 3) - 1.0) < 1e-12 and abs(m.v[-1] - 2.0) < 1e-12
    out.append(CheckResult("paths.running_min", ok, f"M(7/3)={eval_path(m, 7 / 3)!r}, M(3)={m.v[-1]!r}"))
    s = BrownianSampler(seed, 1e-3, 2.0, refine_depth=1)
    w = sample_brownian(s, 3)
    lv = np.array([0.1, 0.3, 0.6, 1.0])
    direct = hitting_times(w, lv)
    lazy, _ = first_passage(s, 3, lv)
    same = np.array_equal(np.isnan(direct), np.isnan(lazy)) and np.array_equal(
        direct[~np.isnan(direct)], lazy[~np.isnan(lazy)]
    )
    out.append(CheckResult("paths.first_passage_matches_materialized", bool(same), "lazy scan vs full path"))
    coarse = sample_brownian(BrownianSampler(seed, 1e-3, 2.0), 3)
    ref = refine_bridge(coarse, BrownianSampler(seed, 1e-3, 2.0, refine_depth=1), 1, 3)
    out.append(CheckResult("paths.refine_bridge_consistent", ref.same_knots(w), "refine(depth 0) == sample(depth 1)"))
    return out


def _noise():
    cases = [
        (Constant(2.0), (0.0, 2.0)),
        (Affine(1.0, 1.0), (1.0, 1.0)),
        (TruncatedPowerLaw(2.0, 0.5), (2.0, 0.25)),
        (Tabulated(PiecewiseLinearPath.from_knots([(0, 1), (1, 3), (2, 2)])), (2.0, 1.0)),
    ]
    ok = all(s.constants() == c for s, c in cases) and PowerLaw(0.5)(1.0) == 0.0
    return [CheckResult("noise.constants", ok, "K and delta of the standard families")]


def _scheme(seed):
    out = []
    s = BrownianSampler(seed, 1e-3, 1.0)
    rng = np.random.default_rng(seed)
    worst_t, worst_x, worst_inv = 0.0, 0.0, 0.0
    flat = 0.0
    for i in range(10):
        f = sample_brownian(s, i)
        sig = Affine(float(rng.uniform(0.5, 2)), float(rng.uniform(0, 2)))
        n = int(rng.choice([4, 16, 64, 256]))
        x0 = float(rng.choice([0.0, 0.1]))
        a = construct_by_hitting(f, sig, n, x0)
        b = construct_inductive(f, sig, n, x0)
        gt, gx = construction_gap(a, b)
        worst_t, worst_x = max(worst_t, gt), max(worst_x, gx)
        r = invariant_residuals(b)
        flat = max(flat, r.pop("flat_fraction"))
        worst_inv = max(worst_inv, max(r.values()))
    out.append(
        CheckResult(
            "scheme.dual_construction",
            worst_t <= 1e-12 and worst_x <= 1e-9,
            f"max event gap {worst_t:.3g}, max x gap {worst_x:.3g}",
        )
    )
    out.append(CheckResult("scheme.lemma_identities", worst_inv <= 1e-9, f"max residual {worst_inv:.3g}"))
    out.append(CheckResult("scheme.flatness", flat <= 1e-6, f"max off-boundary share {flat:.3g}"))
    f = sample_brownian(s, 0)
    ratio, bad = oscillation_check(construct_inductive(f, Affine(1, 1), 256), 0.5, n_pairs=500, seed=seed)
    out.append(CheckResult("scheme.oscillation_bound", bad == 0, f"max observed/bound {ratio:.3g}"))
    t = np.linspace(0.0, 2.0, 2001)
    lin = PiecewiseLinearPath(t, -t)
    rep = refine_until(lin, Affine(1, 1), 0.0, 1, 1e-3, 16)
    m = rep.final.x.t <= math.log(3)
    err = float(np.max(np.abs(rep.final.x.v[m] - (1 - np.exp(rep.final.x.t[m])))))
    dec = all(b < a for a, b in zip(rep.sup_gaps, rep.sup_gaps[1:]))
    out.append(
        CheckResult("scheme.closed_form_oracle", rep.converged and err <= 1e-2 and dec, f"max error {err:.3g}")
    )
    c1 = construct_inductive(f, Constant(1.5), 8)
    c2 = construct_inductive(f, Constant(1.5), 16)
    gap = sup_distance(c1, c2)
    out.append(CheckResult("scheme.constant_noise_level_free", gap <= 1e-12, f"gap {gap:.3g}"))
    return out


def _reflected(seed):
    s = BrownianSampler(seed, 1e-4, 1.0)
    rel = []
    low = 0.0
    for i in range(10):
        sol = construct_inductive(sample_brownian(s, i), Affine(1, 1), 512)
        rp = reflect(sol)
        low = min(low, float(rp.Y.v.min()))
        q = realized_qv(rp.X, 1e-4).v[-1]
        si = sigma2_integral(rp.L, rp.sigma_used).v[-1]
        rel.append(abs(q - si) / si)
    return [
        CheckResult("reflected.nonnegative", low >= -1e-9, f"min Y {low:.3g}"),
        CheckResult("reflected.quadratic_variation", float(np.mean(rel)) <= 0.05, f"mean rel error {np.mean(rel):.3g}"),
    ]


def _determinacy(seed):
    out = []
    dens = lambda t: math.exp(-1.0 / (2 * t)) / math.sqrt(2 * math.pi * t**3)  # noqa: E731
    val = quad(lambda t: math.exp(-t) * dens(t), 0, math.inf, limit=200)[0]
    out.append(
        CheckResult("determinacy.levy_laplace_consistency", abs(val - math.exp(-math.sqrt(2))) < 1e-3, f"{val:.6f}")
    )
    ok = det.S_p_limit(0.5) == 2.0 and det.S_p_limit(1.0) == math.inf and abs(det.S_p(1.0, 1 - math.exp(-1)) - 1) < 1e-12
    out.append(CheckResult("determinacy.S_p", ok, "limits and p = 1 value"))
    s = BrownianSampler(seed, 1e-3, 4.0)
    f = sample_brownian(s, 1)
    worst = 0.0
    n = 1024
    for alpha in (0.25, 0.5, 0.9):
        lvl = det.S_p(0.5, alpha)
        tt = hitting_time(f, lvl)
        if tt is None:
            continue
        sol = construct_inductive(f, TruncatedPowerLaw(0.5, 0.1), n)
        worst = max(worst, abs(eval_path(sol.L, tt) - alpha))
    out.append(CheckResult("determinacy.time_change", worst <= 2.0 / n + 1e-9, f"max |L - alpha| {worst:.3g}"))
    taus = [det.sample_tau_direct(p, s, 2).tau for p in (0.0, 0.3, 0.6)]
    fin = [t for t in taus if t is not None]
    mono = all(b >= a for a, b in zip(fin, fin[1:])) and all(t is None for t in taus[len(fin) :])
    out.append(CheckResult("determinacy.monotone_in_p", mono, f"taus {taus}"))
    return out


def _ensemble(seed):
    seeds = {ens.per_path_seed(seed, i) for i in range(10000)}
    out = [CheckResult("ensemble.seed_uniqueness", len(seeds) == 10000, f"{len(seeds)} distinct seeds")]
    rng = np.random.default_rng(seed)
    u = rng.random(2000)
    ks = ens.ks_distance(ens.ecdf(u), lambda x: np.clip(x, 0, 1))
    out.append(CheckResult("ensemble.ks_uniform_sanity", ks <= 1.63 / math.sqrt(u.size), f"KS {ks:.4f}"))
    s = BrownianSampler(seed, 1e-3, 8.0)
    task = partial(_tau_of_index, s)
    r1 = ens.run_ensemble(task, 16, workers=1)
    r2 = ens.run_ensemble(task, 16, workers=2, batch=3)
    out.append(CheckResult("ensemble.worker_independence", r1.values == r2.values, "1 vs 2 workers"))
    return out


def run_all(seed: int = 12345) -> list[CheckResult]:
    results = []
    for fn in (partial(_paths, seed), _noise, partial(_scheme, seed), partial(_reflected, seed),
               partial(_determinacy, seed), partial(_ensemble, seed)):
        try:
            results.extend(fn())
        except Exception as exc:  # a crashing check is a failing check
            name = getattr(fn, "func", fn).__name__.lstrip("_")
            results.append(CheckResult(f"{name}.error", False, f"{type(exc).__name__}: {exc}"))
    return results
