"""Command line: ``loctime <command> --config <file> [--out <dir>]``.

Commands are ``path``, ``converge``, ``determinacy`` and ``checks``.  The
config is one JSON object; unknown keys are rejected and every problem is
reported with the key it concerns.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np

from . import checks as checks_mod
from . import determinacy as det
from .csvio import read_columns, write_columns
from .ensemble import EnsembleReport, ecdf, estimate_laplace, ks_distance, run_ensemble, summarize
from .errors import ConfigurationError, LoctimeError
from .noise import make as make_noise
from .paths import BrownianSampler, PiecewiseLinearPath, eval_path, sample_brownian
from .reflected import ReflectedPath, emit_csv, reflect
from .scheme import SchemeSolution, construct, refine_until

COMMANDS = ("path", "converge", "determinacy", "checks")
MASK64 = (1 << 64) - 1

_COMMON = {"command", "seed", "T", "dt", "refine_depth", "workers"}
_ALLOWED = {
    "path": _COMMON | {"n0", "sigma", "x0", "path_index", "epsilon", "grid_dt", "driver", "construction"},
    "converge": _COMMON
    | {"n0", "tol", "max_doublings", "sigma", "x0", "path_index", "driver", "construction"},
    "determinacy": _COMMON | {"p", "lambda", "num_paths", "method", "compare", "k_max", "n"},
    "checks": {"command", "seed"},
}
_INTS = {"seed", "refine_depth", "workers", "n0", "path_index", "max_doublings", "num_paths", "k_max", "n"}
_FLOATS = {"T", "dt", "x0", "epsilon", "grid_dt", "tol", "p"}
ECDF_PROBES = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 64.0)


@dataclass(frozen=True)
class RunConfig:
    command: str
    seed: int
    T: float = 1.0
    dt: float = 1e-3
    refine_depth: int = 0
    workers: int = 1
    n0: int = 64
    tol: float = 1e-3
    max_doublings: int = 10
    sigma: dict = field(default_factory=lambda: {"kind": "affine", "intercept": 1.0, "slope": 1.0})
    x0: float = 0.0
    path_index: int = 0
    epsilon: float = 0.05
    grid_dt: float | None = None
    driver: dict = field(default_factory=lambda: {"kind": "brownian"})
    construction: str = "inductive"
    p: float = 0.0
    lambdas: tuple = ()
    num_paths: int = 1
    method: str = "direct"
    compare: bool = True
    k_max: int = 64
    n: int = 1024

    def echo(self) -> dict:
        """Result-relevant settings; ``workers`` only affects scheduling and is left out."""
        d = asdict(self)
        d["lambda"] = list(d.pop("lambdas"))
        return {k: d[k] for k in sorted(d) if k in _ALLOWED[self.command] and k != "workers"}


class ConfigError(ConfigurationError):
    """Invalid run configuration; ``problems`` lists ``(key, message)`` pairs."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(f"{k}: {m}" for k, m in self.problems))


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def parse_config(text: str) -> RunConfig:
    """Validate a JSON config; raises :class:`ConfigError` naming every bad key."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("<document>", f"not valid JSON: {exc}")]) from exc
    if not isinstance(raw, dict):
        raise ConfigError([("<document>", "top level must be an object")])
    cmd = raw.get("command")
    if cmd not in COMMANDS:
        raise ConfigError([("command", f"must be one of {list(COMMANDS)}")])
    problems = []
    for k in sorted(set(raw) - _ALLOWED[cmd]):
        problems.append((k, f"unknown key for command {cmd!r}"))
    if "seed" not in raw:
        problems.append(("seed", "required"))
    vals = {}
    for k, v in raw.items():
        if k not in _ALLOWED[cmd] or k == "command":
            continue
        if k in _INTS and not _is_int(v):
            problems.append((k, "must be an integer"))
        elif k in _FLOATS and not _is_num(v):
            problems.append((k, "must be a finite number"))
        else:
            vals[k] = v
    _check_values(cmd, vals, problems)
    if problems:
        raise ConfigError(problems)
    if "lambda" in vals:
        vals["lambdas"] = tuple(float(x) for x in vals.pop("lambda"))
    for k in _FLOATS & set(vals):
        vals[k] = float(vals[k])
    return RunConfig(command=cmd, **vals)


def _check_values(cmd, v, problems):
    def bad(key, msg):
        problems.append((key, msg))

    if "seed" in v and not 0 <= v["seed"] <= MASK64:
        bad("seed", "must lie in [0, 2^64)")
    for k in ("T", "dt", "tol", "epsilon", "grid_dt"):
        if k in v and not v[k] > 0:
            bad(k, "must be positive")
    T, dt = v.get("T", 1.0), v.get("dt", 1e-3)
    if "T" in v or "dt" in v:
        if dt >= T:
            bad("dt", "must be smaller than T")
    if "refine_depth" in v and not 0 <= v["refine_depth"] <= 20:
        bad("refine_depth", "must lie in [0, 20]")
    for k in ("workers", "n0", "num_paths", "n"):
        if k in v and v[k] < 1:
            bad(k, "must be >= 1")
    for k in ("path_index", "max_doublings"):
        if k in v and v[k] < 0:
            bad(k, "must be >= 0")
    if "k_max" in v and v["k_max"] < 2:
        bad("k_max", "must be >= 2")
    if "x0" in v and v["x0"] < 0:
        bad("x0", "must be >= 0")
    if "grid_dt" in v and v["grid_dt"] > T:
        bad("grid_dt", "must not exceed T")
    if "sigma" in v:
        try:
            sig = make_noise(v["sigma"])
            if cmd in ("path", "converge") and not sig.lower_bound_delta > 0:
                bad("sigma", "must be bounded away from zero")
        except (ConfigurationError, TypeError) as exc:
            bad("sigma", str(exc))
    if "driver" in v:
        _check_driver(v["driver"], bad)
    if "construction" in v and v["construction"] not in ("inductive", "hitting"):
        bad("construction", "must be 'inductive' or 'hitting'")
    if "method" in v and v["method"] not in ("direct", "scheme"):
        bad("method", "must be 'direct' or 'scheme'")
    if "compare" in v and not isinstance(v["compare"], bool):
        bad("compare", "must be true or false")
    if "lambda" in v:
        lam = v["lambda"]
        if not isinstance(lam, list) or not all(_is_num(x) and x > 0 for x in lam):
            bad("lambda", "must be a list of positive numbers")
    if cmd == "determinacy":
        p = v.get("p", 0.0)
        if _is_num(p) and p < 0:
            bad("p", "must be >= 0")
        elif _is_num(p) and p >= 1:
            if v.get("compare", True) and v.get("lambda"):
                bad("p", "Laplace comparison needs p < 1; set compare to false")
            if v.get("method", "direct") == "direct":
                bad("p", "the direct method needs p < 1; use method 'scheme'")


def _check_driver(d, bad):
    if not isinstance(d, dict) or "kind" not in d:
        bad("driver", "must be an object with a 'kind' key")
        return
    kind = d["kind"]
    keys = set(d) - {"kind"}
    if kind == "brownian":
        if keys:
            bad("driver", "brownian driver takes no further keys")
    elif kind == "linear":
        if keys != {"slope"} or not _is_num(d["slope"]):
            bad("driver", "linear driver takes one numeric key 'slope'")
    elif kind == "knots":
        try:
            if keys != {"knots"}:
                raise ValueError("takes one key 'knots'")
            f = PiecewiseLinearPath.from_knots(d["knots"])
            if f.v[0] != 0:
                raise ValueError("must start at 0")
        except (ValueError, TypeError, IndexError) as exc:
            bad("driver", f"bad knots driver: {exc}")
    else:
        bad("driver", f"unknown driver kind {kind!r}")


# --------------------------------------------------------------------------
# files
# --------------------------------------------------------------------------


def write_path_csv(obj, target) -> None:
    """``t,x,L,Y`` on the knots of ``L`` with round-trip-exact floats."""
    if isinstance(obj, SchemeSolution):
        obj = reflect(obj)
    if not isinstance(obj, ReflectedPath):
        raise TypeError("expected a SchemeSolution or ReflectedPath")
    write_columns(target, ("t", "x", "L", "Y"), (obj.Y.t, obj.X.v, obj.L.v, obj.Y.v))


def read_path_csv(source):
    return read_columns(source, ("t", "x", "L", "Y"))


def write_report_json(report: EnsembleReport, target) -> None:
    report.write(target)


def _sampler(cfg: RunConfig) -> BrownianSampler:
    return BrownianSampler(cfg.seed, cfg.dt, cfg.T, cfg.refine_depth)


def make_driver(cfg: RunConfig) -> PiecewiseLinearPath:
    kind = cfg.driver["kind"]
    if kind == "brownian":
        return sample_brownian(_sampler(cfg), cfg.path_index)
    if kind == "linear":
        k = int(math.ceil(cfg.T / cfg.dt - 1e-9))
        t = np.arange(k + 1, dtype=np.float64) * cfg.dt
        t[-1] = cfg.T
        return PiecewiseLinearPath(t, float(cfg.driver["slope"]) * t)
    return PiecewiseLinearPath.from_knots(cfg.driver["knots"])


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _cmd_path(cfg: RunConfig, out: str) -> int:
    f = make_driver(cfg)
    sol = construct(f, make_noise(cfg.sigma), cfg.n0, cfg.x0, cfg.construction)
    rp = reflect(sol)
    f.to_csv(os.path.join(out, "driver.csv"))
    write_path_csv(rp, os.path.join(out, "path.csv"))
    grid = cfg.grid_dt or min(cfg.dt, f.T)
    emit_csv(rp, os.path.join(out, "reflected.csv"), grid, cfg.epsilon)
    return 0


def _cmd_converge(cfg: RunConfig, out: str) -> int:
    f = make_driver(cfg)
    rep = refine_until(f, make_noise(cfg.sigma), cfg.x0, cfg.n0, cfg.tol, cfg.max_doublings, cfg.construction)
    with open(os.path.join(out, "convergence.txt"), "w", encoding="utf-8") as fh:
        fh.write(rep.to_text())
    write_path_csv(rep.final, os.path.join(out, "path.csv"))
    print(f"converged={str(rep.converged).lower()} final_n={rep.final.n} gaps={len(rep.sup_gaps)}")
    return 0


def tau_task(method: str, p: float, k_max: int, n: int, sampler: BrownianSampler, index: int):
    """Picklable per-path task for the determinacy ensemble."""
    if method == "direct":
        return det.sample_tau_direct(p, sampler, index)
    return det.sample_tau_scheme(det.DeterminacyConfig(p, k_max=k_max, n=n), sampler, index)


def determinacy_report(cfg: RunConfig, samples, failures) -> EnsembleReport:
    ok = [s for s in samples if s is not None]
    stats = {}
    fin = [s.tau for s in ok if s.tau is not None]
    stats["tau"] = {
        "n_finite": len(fin),
        "n_censored": len(ok) - len(fin),
        "finite_summary": summarize(fin).as_dict() if fin else None,
    }
    stats["L_at_T"] = summarize([s.L_at_T for s in ok]).as_dict() if ok else None
    if ok:
        F = ecdf(ok)
        probes = [t for t in ECDF_PROBES if t <= cfg.T]
        stats["ecdf_probes"] = [[t, float(F(t))] for t in probes]
        if cfg.p < 1 and cfg.compare:
            a = det.S_p_limit(cfg.p)
            ref = partial(det.levy_cdf, a)
            stats["ks_vs_first_passage_law"] = {
                "level": a,
                "ks": ks_distance(F, ref, horizon=cfg.T),
                "reference_at_probes": [[t, float(ref(t))] for t in probes],
            }
            table = []
            for lam in cfg.lambdas:
                est = estimate_laplace(ok, lam, horizon=cfg.T).as_dict()
                est["reference"] = det.laplace_reference(cfg.p, lam)
                table.append(est)
            stats["laplace"] = table
    return EnsembleReport("determinacy", cfg.num_paths, cfg.seed, cfg.echo(), stats, failures)


def _cmd_determinacy(cfg: RunConfig, out: str) -> int:
    task = partial(tau_task, cfg.method, cfg.p, cfg.k_max, cfg.n, _sampler(cfg))
    run = run_ensemble(task, cfg.num_paths, workers=cfg.workers)
    rows = [(i, s) for i, s in zip(run.indices, run.values) if s is not None]
    write_columns(
        os.path.join(out, "tau.csv"),
        ("path_index", "method", "tau", "censored", "L_at_T"),
        (
            [i for i, _ in rows],
            [s.method for _, s in rows],
            [s.tau for _, s in rows],
            [s.censored for _, s in rows],
            [s.L_at_T for _, s in rows],
        ),
    )
    rep = determinacy_report(cfg, run.values, run.failures)
    rep.wall_clock = run.wall_clock
    write_report_json(rep, os.path.join(out, "report.json"))
    return 0 if run.complete else 3


def _cmd_checks(cfg: RunConfig, out: str) -> int:
    results = checks_mod.run_all(cfg.seed)
    lines = [r.line() for r in results]
    with open(os.path.join(out, "checks.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed} passed, {failed} failed")
    return 1 if failed else 0


_RUNNERS = {"path": _cmd_path, "converge": _cmd_converge, "determinacy": _cmd_determinacy, "checks": _cmd_checks}


def run_command(cfg: RunConfig, out: str = ".") -> int:
    os.makedirs(out, exist_ok=True)
    return _RUNNERS[cfg.command](cfg, out)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="loctime", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", default=".", help="output directory (created if missing)")
    args = ap.parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
    except OSError as exc:
        print(f"loctime: cannot read config: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"loctime: invalid config: {exc}", file=sys.stderr)
        return 2
    if cfg.command != args.command:
        print(f"loctime: config is for {cfg.command!r}, not {args.command!r}", file=sys.stderr)
        return 2
    try:
        return run_command(cfg, args.out)
    except OSError as exc:
        print(f"loctime: I/O error: {exc}", file=sys.stderr)
        return 2
    except LoctimeError as exc:
        print(f"loctime: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
