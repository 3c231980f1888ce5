"""Command-line experiment harness.

Wires the simulation modules into reproducible experiments.  Every
experiment writes a CSV result table plus a JSON summary; CSV bodies are
byte-identical for identical (config, seed) regardless of worker count, and
wall-clock information lives only in the JSON provenance block.

Exit codes: 0 success, 2 validation error, 3 budget error, 4 failed
structural diagnostic.
"""

from __future__ import annotations

import argparse
import math
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from itertools import combinations
from pathlib import Path

import json

import numpy as np

from . import dual, forward, limits, pair, pathspace
from .errors import BudgetError, DiagnosticFailure, ParameterError
from .events import NEUTRAL, SELECTIVE
from .params import (
    ModelParams,
    limit_constants,
    parse_config_file,
    params_from_config,
)
from .streams import substream

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BUDGET = 3
EXIT_DIAGNOSTIC = 4

EXPERIMENTS = (
    "pu-curve",
    "drift-diffusion",
    "duality",
    "samelaw",
    "nearby-scaling",
    "meeting-time",
    "net-diagnostics",
    "metric-selftest",
    "simulate",
)

# per-experiment defaults; CLI flags and config files override these
_DEFAULTS: dict[str, dict] = {
    "pu-curve": dict(n=1000, alpha=1.0, upsilon=1.0, mu="delta:1.0",
                     reps=200, horizon=1.0, budget=10_000_000),
    "drift-diffusion": dict(n=100, alpha=1.0, upsilon=1.0, mu="delta:1.0",
                            reps=20_000, horizon=1.0, budget=50_000_000),
    "duality": dict(n=100, alpha=1.0, upsilon=1.0, mu="delta:1.0",
                    reps=4_000, horizon=0.25, budget=200_000_000),
    "samelaw": dict(n=100, alpha=1.0, upsilon=1.0, mu="delta:1.0",
                    reps=10_000, horizon=1.0, budget=0),
    "nearby-scaling": dict(n=100, alpha=1.0, upsilon=1.0, mu="delta:1.0",
                           reps=4_000, horizon=1.0, budget=50_000_000),
    "meeting-time": dict(n=1000, alpha=1.0, upsilon=1.0, mu="delta:1.0",
                         reps=5_000, horizon=64.0, budget=50_000_000),
    "net-diagnostics": dict(n=100, alpha=1.0, upsilon=1.0, mu="delta:1.0",
                            reps=100, horizon=0.25, budget=0),
    "metric-selftest": dict(n=100, alpha=1.0, upsilon=1.0, mu="delta:1.0",
                            reps=200, horizon=1.0, budget=0),
    "simulate": dict(n=100, alpha=1.0, upsilon=1.0, mu="delta:1.0",
                     reps=1, horizon=0.25, budget=1_000_000),
}


@dataclass(frozen=True)
class ExperimentSpec:
    """Fully resolved description of one experiment run."""

    name: str
    params: ModelParams
    replicates: int
    horizon: float
    out_dir: Path
    workers: int = 1
    budget: int = 0
    upsilons: tuple[float, ...] = ()
    ns: tuple[int, ...] = (100, 400, 1600)
    gap: float = 1.0
    start_points: tuple[float, ...] = (0.0,)

    def __post_init__(self) -> None:
        if self.name not in EXPERIMENTS:
            raise ParameterError(f"unknown experiment {self.name!r}")
        if self.replicates < 1:
            raise ParameterError("replicates must be >= 1")
        if self.horizon <= 0.0:
            raise ParameterError("horizon must be positive")
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")


@dataclass
class ResultTable:
    """Column schema, data rows, aggregate summary and run provenance."""

    columns: tuple[str, ...]
    rows: list[tuple]
    summary: dict
    provenance: dict = field(default_factory=dict)

    def csv_body(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            cells = []
            for v in row:
                if isinstance(v, bool):
                    cells.append("1" if v else "0")
                elif isinstance(v, float):
                    cells.append(repr(v))
                else:
                    cells.append(str(v))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def summary_json(self) -> str:
        return json.dumps(
            {"summary": self.summary, "provenance": self.provenance},
            indent=2, sort_keys=True,
        )


def _params_provenance(spec: ExperimentSpec) -> dict:
    p = spec.params
    return {
        "experiment": spec.name,
        "n": p.n,
        "alpha": p.alpha,                   # always echoed
        "upsilon": p.upsilon,
        "mu_atoms": [[w, r] for r, w in zip(p.mu.radii, p.mu.weights)],
        "seed": p.seed,
        "replicates": spec.replicates,
        "horizon": spec.horizon,
        "workers": spec.workers,
        "budget": spec.budget,
    }


def _map_ordered(fn, items, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(item) for item in items]


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    if values.size == 0:
        return math.nan, math.nan
    mean = float(np.mean(values))
    if values.size < 2:
        return mean, math.nan
    return mean, float(np.std(values, ddof=1)) / math.sqrt(values.size)


# ---------------------------------------------------------------------------
# pu-curve
# ---------------------------------------------------------------------------

def _pu_task(args) -> dict:
    params, upsilon, index, T, reps, budget = args
    p = params.with_(upsilon=upsilon)
    mn, mx, m, inter, status, t_reached = dual.extremal_ancestor_batch(
        0.0, T, p, reps, tag=f"pu-{index}", budget=budget)
    ok = status == 0
    completed = int(np.sum(ok))
    mean, se = _mean_se(np.asarray(mx)[ok])
    return {
        "upsilon": upsilon,
        "mean": mean,
        "se": se,
        "completed": completed,
        "budget_exceeded": int(np.sum(status == 2)),
        "capacity_exceeded": int(np.sum(status == 1)),
        "mean_interactions": float(np.mean(inter)),
        "mean_final_lineages": float(np.mean(np.asarray(m)[ok])) if completed
        else math.nan,
    }


def run_pu_curve(spec: ExperimentSpec):
    """Mean right-most ancestor position at the horizon, swept over upsilon."""
    tasks = [
        (spec.params, u, i, spec.horizon, spec.replicates, spec.budget)
        for i, u in enumerate(spec.upsilons)
    ]
    if not tasks:
        raise ParameterError("pu-curve needs a non-empty upsilon sweep")
    results = _map_ordered(_pu_task, tasks, spec.workers)
    rows = [
        (r["upsilon"], r["mean"], r["se"], r["completed"]) for r in results
    ]
    consts = limit_constants(spec.params.alpha, spec.params.mu)
    any_completed = any(r["completed"] > 0 for r in results)
    table = ResultTable(
        columns=("upsilon", "mean", "se", "replicates"),
        rows=rows,
        summary={
            "per_upsilon": results,
            "full_impact_drift_theory": consts.zeta,
            "partial": any(r["completed"] < spec.replicates for r in results),
        },
    )
    if not any_completed:
        raise BudgetError("no pu-curve replicate finished within the budget")
    return table, {}, None


# ---------------------------------------------------------------------------
# drift-diffusion
# ---------------------------------------------------------------------------

def run_drift_diffusion(spec: ExperimentSpec):
    report = pair.estimate_drift_diffusion(
        spec.params, spec.horizon, spec.replicates, tag="dd")
    # same tags as inside the estimator, so these arrays are the ones it used
    drift_disp = pair.trace_displacements(
        spec.params, spec.horizon, spec.replicates, side="right", tag="dd")
    neutral_disp = pair.trace_displacements(
        spec.params.with_(alpha=0.0), spec.horizon, spec.replicates,
        side="right", tag="dd-n")
    rows = [
        (k, float(drift_disp[k]), float(neutral_disp[k]))
        for k in range(spec.replicates)
    ]
    table = ResultTable(
        columns=("replicate", "drift_displacement", "neutral_displacement"),
        rows=rows,
        summary=json.loads(report.to_json()),
    )
    return table, {}, None


# ---------------------------------------------------------------------------
# duality
# ---------------------------------------------------------------------------

def run_duality(spec: ExperimentSpec):
    T = spec.horizon
    window = forward.duality_window([0.0], T, spec.params)
    w0 = forward.AlleleProfile.from_step(0.0, 1.0, 0.0, window)
    report = forward.duality_check(w0, [0.0], T, spec.params,
                                   spec.replicates, tag="duality",
                                   budget=spec.budget)
    products = forward.forward_moment_batch(
        w0, [0.0], T, spec.params, spec.replicates, tag="duality-f",
        budget=spec.budget)
    rows = [(k, float(products[k])) for k in range(spec.replicates)]
    table = ResultTable(
        columns=("replicate", "forward_product"),
        rows=rows,
        summary=json.loads(report.to_json()),
    )
    return table, {}, None


# ---------------------------------------------------------------------------
# samelaw
# ---------------------------------------------------------------------------

_SAMELAW_CLASSES = (
    ("neutral-left", dual.LEFT, NEUTRAL),
    ("neutral-right", dual.RIGHT, NEUTRAL),
    ("selective-left", dual.LEFT, SELECTIVE),
    ("selective-right", dual.RIGHT, SELECTIVE),
)


def run_samelaw(spec: ExperimentSpec):
    """Forward vs time-reversed jump law per extremal class."""
    rows = []
    stats = {}
    for ci, (label, side, kind) in enumerate(_SAMELAW_CLASSES):
        rng = substream(spec.params.seed, ci, "samelaw")
        fwd, neg_bwd = dual.jump_law_samples(
            spec.params, side, kind, spec.replicates, rng)
        stat, p = limits.ks_two_sample(fwd, neg_bwd)
        stats[label] = {"ks_statistic": stat, "p_value": p,
                        "forward_mean": float(np.mean(fwd)),
                        "reversed_mean": float(np.mean(neg_bwd))}
        for k in range(spec.replicates):
            rows.append((label, k, float(fwd[k]), float(neg_bwd[k])))
    table = ResultTable(
        columns=("class", "replicate", "forward_delta",
                 "negated_backward_delta"),
        rows=rows,
        summary={"classes": stats},
    )
    return table, {}, None


# ---------------------------------------------------------------------------
# nearby-scaling
# ---------------------------------------------------------------------------

def _nearby_task(args):
    params, n, index, T, reps, budget = args
    p = params.with_(n=n)
    _, _, _, N, _, _, _ = pair.pair_batch(p, 0.0, 0.0, T, reps,
                                          tag=f"nearby-{index}",
                                          budget=budget)
    return n, np.asarray(N)


def run_nearby_scaling(spec: ExperimentSpec):
    """Occupation of the nearby regime versus n (expected slope -1/2)."""
    tasks = [
        (spec.params, n, i, spec.horizon, spec.replicates, spec.budget)
        for i, n in enumerate(spec.ns)
    ]
    results = _map_ordered(_nearby_task, tasks, spec.workers)
    rows = []
    means = []
    per_n = []
    for n, N in results:
        mean, se = _mean_se(N)
        means.append(mean)
        per_n.append({"n": n, "mean_nearby_time": mean, "se": se})
        for k in range(spec.replicates):
            rows.append((n, k, float(N[k])))
    slope = float(np.polyfit(np.log(np.asarray(spec.ns, dtype=float)),
                             np.log(np.asarray(means)), 1)[0])
    table = ResultTable(
        columns=("n", "replicate", "nearby_time"),
        rows=rows,
        summary={"per_n": per_n, "loglog_slope": slope,
                 "expected_slope": -0.5},
    )
    return table, {}, None


# ---------------------------------------------------------------------------
# meeting-time
# ---------------------------------------------------------------------------

def run_meeting_time(spec: ExperimentSpec):
    consts = limit_constants(spec.params.alpha, spec.params.mu)
    if consts.zeta <= 0.0:
        raise ParameterError(
            "meeting-time comparison needs alpha > 0 (positive approach "
            "drift)"
        )
    times, met = dual.backward_pair_meeting_times(
        spec.params, spec.gap, spec.replicates,
        t_cap=spec.horizon, budget=spec.budget)
    oracle = limits.first_passage_oracle(
        spec.gap, 2.0 * consts.zeta, 2.0 * consts.xi2_derived)
    met_times = np.asarray(times)[np.asarray(met)]
    stat, p = limits.ks_two_sample(met_times, oracle.cdf)
    rows = [
        (k, float(times[k]), bool(met[k])) for k in range(spec.replicates)
    ]
    table = ResultTable(
        columns=("replicate", "meeting_time", "met"),
        rows=rows,
        summary={
            "ks_statistic": stat,
            "p_value": p,
            "oracle_mean": oracle.mean,
            "empirical_mean": float(np.mean(met_times)),
            "met_fraction": float(np.mean(np.asarray(met))),
            "gap": spec.gap,
            "approach_drift": 2.0 * consts.zeta,
            "gap_variance": 2.0 * consts.xi2_derived,
        },
    )
    return table, {}, None


# ---------------------------------------------------------------------------
# net-diagnostics
# ---------------------------------------------------------------------------

def _net_trial(args):
    params, T, trial = args
    rng = substream(params.seed, trial, "net")
    starts_f = tuple(sorted(rng.uniform(-1.0, 1.0, size=3)))
    starts_b = tuple(sorted(rng.uniform(-1.0, 1.0, size=3)))
    widen = 1.0
    for _ in range(4):
        try:
            fams = dual.coupled_families(
                params, T, rng,
                forward_starts=starts_f, backward_starts=starts_b,
                window_halfwidth=None if widen == 1.0 else widen)
            break
        except ParameterError:
            consts = limit_constants(params.alpha, params.mu)
            base = 1.0 + 4.0 * (6.0 * math.sqrt(consts.xi2_derived * T)
                                + params.max_rescaled_radius)
            widen = 2.0 * max(widen, base)
    else:
        raise DiagnosticFailure("could not contain traces in any window")
    crossings = 0
    for family in (fams.forward_left, fams.forward_right):
        for a, b in combinations(family, 2):
            crossings += len(dual.detect_crossing(a.path, b.path))
    for fwd_fam, bwd_fam in ((fams.forward_left, fams.backward_left),
                             (fams.forward_right, fams.backward_right)):
        for a in fwd_fam:
            for b in bwd_fam:
                crossings += len(dual.detect_crossing(a.path, b.path))
    wedge_violations = dual.wedge_diagnostic(
        fams.all_forward, fams.backward_right, fams.backward_left)
    return trial, crossings, wedge_violations, fams.event_count


def run_net_diagnostics(spec: ExperimentSpec):
    """Structural checks: no illegal crossings, no wedge entries, meeting law."""
    if spec.params.upsilon != 1.0:
        raise ParameterError("net diagnostics require upsilon = 1")
    tasks = [(spec.params, spec.horizon, i) for i in range(spec.replicates)]
    results = _map_ordered(_net_trial, tasks, spec.workers)
    rows = [tuple(r) for r in results]
    total_cross = sum(r[1] for r in results)
    total_wedge = sum(r[2] for r in results)

    meet_params = spec.params.with_(n=1000)
    consts = limit_constants(meet_params.alpha, meet_params.mu)
    meeting = {}
    if consts.zeta > 0.0:
        times, met = dual.backward_pair_meeting_times(
            meet_params, 1.0, 2000, t_cap=64.0)
        oracle = limits.first_passage_oracle(
            1.0, 2.0 * consts.zeta, 2.0 * consts.xi2_derived)
        met_times = np.asarray(times)[np.asarray(met)]
        stat, p = limits.ks_two_sample(met_times, oracle.cdf)
        meeting = {"ks_statistic": stat, "p_value": p,
                   "oracle_mean": oracle.mean,
                   "empirical_mean": float(np.mean(met_times))}
    table = ResultTable(
        columns=("trial", "crossings", "wedge_violations", "events"),
        rows=rows,
        summary={
            "total_crossings": total_cross,
            "total_wedge_violations": total_wedge,
            "trials": spec.replicates,
            "meeting_time": meeting,
        },
    )
    problems = []
    if total_cross > 0:
        problems.append(f"{total_cross} forbidden crossings")
    if total_wedge > 0:
        problems.append(f"{total_wedge} wedge entries")
    if meeting and meeting["p_value"] <= 0.01:
        problems.append(
            f"meeting-time KS p = {meeting['p_value']:.4g} <= 0.01")
    diag = "; ".join(problems) if problems else None
    return table, {}, diag


# ---------------------------------------------------------------------------
# metric-selftest
# ---------------------------------------------------------------------------

def _random_step_gpath(rng, max_jumps: int = 3) -> pathspace.GPath:
    # synthetic piecewise-constant element of the compact path space; on
    # this class the uniform-cost DP distance is exact, so the axioms below
    # must hold up to DP-optimality tolerance
    k = int(rng.integers(0, max_jumps + 1))
    knots = np.sort(rng.uniform(-0.8, 0.9, size=k))
    while len(set(knots)) != k:
        knots = np.sort(rng.uniform(-0.8, 0.9, size=k))
    vals = rng.uniform(-0.9, 0.9, size=k + 1)
    sigma = float(rng.uniform(-1.0, min(knots) if k else 0.5))
    return pathspace.step_path(sigma, vals[0], list(zip(knots, vals[1:])))


def _random_cadlag_path(rng, max_jumps: int = 3) -> pathspace.CadlagPath:
    k = int(rng.integers(0, max_jumps + 1))
    times = np.sort(rng.uniform(0.05, 0.95, size=k))
    jumps = tuple((float(t), float(rng.normal())) for t in times)
    return pathspace.CadlagPath(sigma=0.0, v0=float(rng.normal()),
                                jumps=jumps, t_end=1.0)


def run_metric_selftest(spec: ExperimentSpec):
    rng = substream(spec.params.seed, 0, "metric")
    checks = {
        "identity": 0, "symmetry": 0, "triangle": 0, "envelope": 0,
        "nonnegativity": 0,
    }
    worst_triangle = 0.0
    for _ in range(spec.replicates):
        f = _random_step_gpath(rng)
        g = _random_step_gpath(rng)
        h = _random_step_gpath(rng)
        d_fg = pathspace.d_prime(f, g)
        d_gf = pathspace.d_prime(g, f)
        if pathspace.d_prime(f, f) != 0.0 or pathspace.d_M(f, f) != 0.0:
            checks["identity"] += 1
        if d_fg != d_gf or pathspace.d_M(f, g) != pathspace.d_M(g, f):
            checks["symmetry"] += 1
        if d_fg < 0.0:
            checks["nonnegativity"] += 1
        excess = pathspace.d_prime(f, h) - (d_fg + pathspace.d_prime(g, h))
        worst_triangle = max(worst_triangle, excess)
        if excess > 1e-9:
            checks["triangle"] += 1
        if not pathspace.compactify(_random_cadlag_path(rng)).envelope_ok():
            checks["envelope"] += 1
    failures = sum(checks.values())
    rows = [(name, spec.replicates, count) for name, count in
            sorted(checks.items())]
    table = ResultTable(
        columns=("check", "trials", "failures"),
        rows=rows,
        summary={"checks": checks, "worst_triangle_excess": worst_triangle},
    )
    diag = None
    if failures:
        diag = f"{failures} metric axiom failures: {checks}"
    return table, {}, diag


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def run_simulate(spec: ExperimentSpec):
    graph = dual.run_dual(
        list(spec.start_points), spec.horizon, spec.params,
        budget=spec.budget or 1_000_000, strategy="hitting")
    final = graph.final_state
    rows = [(0, final.count, final.extremal(dual.LEFT),
             final.extremal(dual.RIGHT), graph.interactions)]
    table = ResultTable(
        columns=("replicate", "final_lineages", "min_position",
                 "max_position", "interactions"),
        rows=rows,
        summary={
            "start_points": list(spec.start_points),
            "final_lineages": final.count,
            "events_recorded": len(graph.events),
            "branching_events": len(graph.branching_event_ids()),
        },
    )
    return table, {"genealogy.json": graph.to_json()}, None


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

_RUNNERS = {
    "pu-curve": run_pu_curve,
    "drift-diffusion": run_drift_diffusion,
    "duality": run_duality,
    "samelaw": run_samelaw,
    "nearby-scaling": run_nearby_scaling,
    "meeting-time": run_meeting_time,
    "net-diagnostics": run_net_diagnostics,
    "metric-selftest": run_metric_selftest,
    "simulate": run_simulate,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slfvsim",
        description="Simulation experiments for the spatial selection model "
                    "and its branching-coalescing dual.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None,
                       help="key = value parameter file")
        p.add_argument("--n", type=int, default=None)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--upsilon", type=float, default=None)
        p.add_argument("--mu", type=str, default=None,
                       help="delta:R or atoms:(w,r),(w,r)")
        p.add_argument("--reps", type=int, default=None)
        p.add_argument("--horizon", type=float, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", type=Path, default=Path("."))
        p.add_argument("--budget", type=int, default=None,
                       help="per-replicate interaction/event budget")
        if name == "pu-curve":
            p.add_argument("--upsilons", type=str, default=None,
                           help="comma-separated sweep values in (0, 1]")
            p.add_argument("--upsilon-count", type=int, default=20,
                           help="evenly spaced sweep size when --upsilons "
                                "is not given")
        if name == "nearby-scaling":
            p.add_argument("--ns", type=str, default="100,400,1600",
                           help="comma-separated n sweep")
        if name == "meeting-time":
            p.add_argument("--gap", type=float, default=1.0)
        if name == "simulate":
            p.add_argument("--starts", type=str, default="0.0",
                           help="comma-separated start positions")
    return parser


def build_spec(args: argparse.Namespace) -> ExperimentSpec:
    defaults = _DEFAULTS[args.experiment]
    config = parse_config_file(args.config) if args.config else {}
    base = {k: str(defaults[k]) for k in ("n", "alpha", "upsilon", "mu")}
    base.update(config)
    params = params_from_config(
        base, n=args.n, alpha=args.alpha, upsilon=args.upsilon, mu=args.mu,
        seed=args.seed,
    )

    def resolve(key, flag_value, cast):
        if flag_value is not None:
            return cast(flag_value)
        if key in config:
            return cast(config[key])
        return cast(defaults[key])

    replicates = resolve("reps", args.reps, int)
    horizon = resolve("horizon", args.horizon, float)
    budget = resolve("budget", args.budget, int)

    upsilons: tuple[float, ...] = ()
    if args.experiment == "pu-curve":
        if args.upsilons:
            upsilons = tuple(float(s) for s in args.upsilons.split(","))
        else:
            count = args.upsilon_count
            if count < 1:
                raise ParameterError("upsilon sweep size must be >= 1")
            upsilons = tuple((j + 1) / count for j in range(count))
        for u in upsilons:
            if not 0.0 < u <= 1.0:
                raise ParameterError(f"sweep value {u} outside (0, 1]")

    ns = (100, 400, 1600)
    if args.experiment == "nearby-scaling":
        ns = tuple(int(s) for s in args.ns.split(","))
        if len(ns) < 2:
            raise ParameterError("nearby-scaling needs at least two n values")

    gap = getattr(args, "gap", 1.0)
    starts = (0.0,)
    if args.experiment == "simulate":
        starts = tuple(float(s) for s in args.starts.split(","))

    return ExperimentSpec(
        name=args.experiment,
        params=params,
        replicates=replicates,
        horizon=horizon,
        out_dir=args.out,
        workers=args.workers,
        budget=budget,
        upsilons=upsilons,
        ns=ns,
        gap=gap,
        start_points=starts,
    )


def _build_id() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        spec = build_spec(args)
        table, extra_files, diagnostic = _RUNNERS[spec.name](spec)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except BudgetError as exc:
        print(f"budget error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except DiagnosticFailure as exc:
        print(f"diagnostic failure: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTIC

    table.provenance = {
        **_params_provenance(spec),
        "build_id": _build_id(),
        "wall_time_s": time.perf_counter() - started,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    out_dir = spec.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{spec.name}.csv"
    csv_path.write_text(table.csv_body(), encoding="utf-8")
    json_path = out_dir / f"{spec.name}-summary.json"
    json_path.write_text(table.summary_json(), encoding="utf-8")
    for fname, content in extra_files.items():
        (out_dir / fname).write_text(content, encoding="utf-8")
    print(f"{spec.name}: wrote {csv_path} and {json_path}")
    if diagnostic is not None:
        print(f"diagnostic failure: {diagnostic}", file=sys.stderr)
        return EXIT_DIAGNOSTIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
