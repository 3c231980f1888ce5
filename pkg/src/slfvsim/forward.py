"""Forward-in-time allele-frequency field on piecewise-constant profiles.

The field assigns every spatial position the local proportion of type ``a``.
A neutral event draws one parent inside its interval and a parent type from
the pre-event field, then moves the whole interval a fraction ``upsilon``
towards that type's indicator.  A selective event draws two potential parents
and moves the interval towards 1 only when both carry type ``a``.

Profiles live on a working window; event centres are restricted so event
intervals stay inside it, and the field is frozen (clamped to its edge cells)
outside.  The moment-duality cross-check compares product moments of the
field against the lineage system run from the evaluation points.
"""

from __future__ import annotations

import bisect
import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import BudgetError, ParameterError
from .events import NEUTRAL, SELECTIVE, ReproductionEvent, sample_parents
from .params import ModelParams, limit_constants
from .streams import spawn_seeds, substream

DEFAULT_MAX_BREAKPOINTS = 100_000


@dataclass(frozen=True)
class AlleleProfile:
    """Piecewise-constant frequency profile on a working window.

    ``breakpoints`` are strictly increasing and lie strictly inside the
    window; ``values`` has one entry per cell (one more than breakpoints),
    each in [0, 1].  Outside the window the profile reports the nearest edge
    cell's value.
    """

    window: tuple[float, float]
    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        a, b = self.window
        if not a < b:
            raise ParameterError("window must have positive width")
        if len(self.values) != len(self.breakpoints) + 1:
            raise ParameterError("need one cell value per breakpoint gap")
        prev = a
        for x in self.breakpoints:
            if not prev < x:
                raise ParameterError("breakpoints must increase strictly "
                                     "inside the window")
            prev = x
        if self.breakpoints and not self.breakpoints[-1] < b:
            raise ParameterError("breakpoints must lie inside the window")
        for v in self.values:
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"cell value {v} outside [0, 1]")

    @classmethod
    def constant(cls, value: float, window) -> "AlleleProfile":
        return cls(tuple(window), (), (float(value),))

    @classmethod
    def from_step(cls, threshold: float, left_value: float,
                  right_value: float, window) -> "AlleleProfile":
        """Profile equal to left_value west of the threshold, right_value east."""
        a, b = window
        if not a < threshold < b:
            raise ParameterError("step threshold must lie inside the window")
        if left_value == right_value:
            return cls.constant(left_value, window)
        return cls((a, b), (float(threshold),),
                   (float(left_value), float(right_value)))

    def value(self, x: float) -> float:
        a, b = self.window
        x = min(max(x, a), b)
        return self.values[bisect.bisect_right(self.breakpoints, x)]

    @property
    def cell_count(self) -> int:
        return len(self.values)

    def merged(self) -> "AlleleProfile":
        """Equal profile with adjacent equal-valued cells merged."""
        bp = list(self.breakpoints)
        vals = list(self.values)
        for k in range(len(bp) - 1, -1, -1):
            if vals[k] == vals[k + 1]:
                del bp[k]
                del vals[k + 1]
        return AlleleProfile(self.window, tuple(bp), tuple(vals))

    def mean_over(self, lo: float, hi: float) -> float:
        """Average of the profile over [lo, hi] (clamped to the window)."""
        a, b = self.window
        lo = max(lo, a)
        hi = min(hi, b)
        if not lo < hi:
            raise ParameterError("need a nondegenerate interval inside "
                                 "the window")
        edges = [lo] + [x for x in self.breakpoints if lo < x < hi] + [hi]
        acc = 0.0
        for u, v in zip(edges, edges[1:]):
            acc += (v - u) * self.value(u)
        return acc / (hi - lo)


def dump_profile_csv(profile: AlleleProfile, path) -> None:
    """Write the profile as ``breakpoint,value`` rows.

    Each row gives the west edge of a cell (the first row uses the window's
    west end) and that cell's value.
    """
    a, _ = profile.window
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["breakpoint", "value"])
        writer.writerow([repr(a), repr(profile.values[0])])
        for x, v in zip(profile.breakpoints, profile.values[1:]):
            writer.writerow([repr(x), repr(v)])


def _ensure_breakpoint(bp: list, vals: list, x: float) -> int:
    """Make x a breakpoint, splitting its cell; returns its index in bp."""
    i = bisect.bisect_left(bp, x)
    if i < len(bp) and bp[i] == x:
        return i
    bp.insert(i, x)
    vals.insert(i + 1, vals[i])
    return i


def apply_forward_event(
    w: AlleleProfile,
    event: ReproductionEvent,
    upsilon: float,
    rng: np.random.Generator,
) -> AlleleProfile:
    """Advance the profile through one reproduction event.

    Parent types are drawn from the pre-event profile at the event's parent
    positions; the event interval must lie inside the working window.
    """
    if not 0.0 < upsilon <= 1.0:
        raise ParameterError("upsilon must lie in (0, 1]")
    a, b = w.window
    lo = event.x - event.rho
    hi = event.x + event.rho
    if lo < a or hi > b:
        raise ParameterError(
            f"event interval [{lo}, {hi}] escapes the window [{a}, {b}]"
        )
    if event.kind == NEUTRAL:
        good = 1.0 if rng.random() < w.value(event.z1) else 0.0
    else:
        k1 = rng.random() < w.value(event.z1)
        k2 = rng.random() < w.value(event.z2)
        good = 1.0 if (k1 and k2) else 0.0

    bp = list(w.breakpoints)
    vals = list(w.values)
    if lo > a:
        start = _ensure_breakpoint(bp, vals, lo) + 1
    else:
        start = 0
    if hi < b:
        end = _ensure_breakpoint(bp, vals, hi)
    else:
        end = len(bp)
    for k in range(start, end + 1):
        blended = (1.0 - upsilon) * vals[k] + upsilon * good
        vals[k] = min(max(blended, 0.0), 1.0)
    for k in range(len(bp) - 1, -1, -1):
        if vals[k] == vals[k + 1]:
            del bp[k]
            del vals[k + 1]
    return AlleleProfile(w.window, tuple(bp), tuple(vals))


def _window_rates(params: ModelParams, window) -> tuple[np.ndarray, float]:
    a, b = window
    rates = []
    for r, wt in zip(params.rescaled_radii, params.mu.weights):
        width = max((b - a) - 2.0 * r, 0.0)
        rates.append(params.n * params.sqrt_n * wt * width)
    arr = np.array(rates)
    return arr, float(arr.sum())


def run_forward(
    w0: AlleleProfile,
    T: float,
    params: ModelParams,
    window=None,
    *,
    rng: np.random.Generator | None = None,
    replicate: int = 0,
    max_breakpoints: int = DEFAULT_MAX_BREAKPOINTS,
) -> AlleleProfile:
    """Evolve the profile for T time units under the event dynamics.

    Event centres are restricted so intervals stay inside the window (which
    defaults to the profile's own); the field outside the window is frozen.
    """
    if T <= 0.0:
        raise ParameterError("need T > 0")
    if window is None:
        window = w0.window
    elif tuple(window) != tuple(w0.window):
        raise ParameterError("run window must equal the profile window")
    if rng is None:
        rng = substream(params.seed, replicate, "forward")
    a, b = window
    rates, total = _window_rates(params, window)
    if total <= 0.0:
        raise ParameterError(
            "window too narrow: no event interval fits inside it"
        )
    radii = params.rescaled_radii
    w = w0
    t = 0.0
    while True:
        t += rng.exponential(1.0 / total)
        if t >= T:
            return w
        u = rng.random() * total
        atom = len(radii) - 1
        for i, rate in enumerate(rates):
            if u <= rate:
                atom = i
                break
            u -= rate
        r = radii[atom]
        c = a + r + rng.random() * ((b - a) - 2.0 * r)
        kind = SELECTIVE if rng.random() < params.s_n else NEUTRAL
        parents = sample_parents(kind, c, r, rng)
        z1 = parents[0]
        z2 = parents[1] if kind == SELECTIVE else None
        event = ReproductionEvent(t=t, x=c, rho=r, kind=kind, z1=z1, z2=z2)
        w = apply_forward_event(w, event, params.upsilon, rng)
        if w.cell_count > max_breakpoints:
            raise BudgetError("breakpoint budget exceeded in run_forward",
                              time_reached=t, count=w.cell_count)


# ---------------------------------------------------------------------------
# kernel-backed replicated runs
# ---------------------------------------------------------------------------

def forward_moment_batch(
    w0: AlleleProfile,
    eval_points,
    T: float,
    params: ModelParams,
    replicates: int,
    *,
    tag: str = "forward",
    cap: int = 100_000,
    budget: int = 200_000_000,
) -> np.ndarray:
    """Per-replicate products of the final field over the evaluation points."""
    a, b = w0.window
    seeds = spawn_seeds(params.seed, replicates, tag)
    prod, status = _kernels.forward_profile_batch(
        seeds, params.n, params.alpha, params.upsilon,
        np.asarray(params.mu.radii), np.asarray(params.mu.weights),
        float(a), float(b), float(T),
        np.asarray(w0.breakpoints, dtype=np.float64),
        np.asarray(w0.values, dtype=np.float64),
        np.asarray([float(x) for x in eval_points], dtype=np.float64),
        cap, budget,
    )
    if np.any(status == _kernels.STATUS_BUDGET):
        raise BudgetError("event budget exceeded in forward batch")
    if np.any(status == _kernels.STATUS_CAPACITY):
        raise BudgetError("breakpoint capacity exceeded in forward batch")
    return prod


# ---------------------------------------------------------------------------
# moment duality
# ---------------------------------------------------------------------------

def duality_window(eval_points, T: float, params: ModelParams) -> tuple[float, float]:
    """Symmetric window wide enough for the duality comparison.

    Half-width |x|_max + 4 * spread with spread = 6 * sqrt(xi2 * T) plus the
    maximal rescaled radius, using the jump-law diffusion constant.
    """
    consts = limit_constants(params.alpha, params.mu)
    spread = 6.0 * math.sqrt(consts.xi2_derived * max(T, 0.0)) \
        + params.max_rescaled_radius
    half = max(abs(float(x)) for x in eval_points) + 4.0 * spread
    return (-half, half)


def _dual_product_from_extremes(w0: AlleleProfile, mn: float, mx: float,
                                count: int) -> float:
    """Product of w0 over final lineages, when (min, max, count) determine it.

    Supported shapes: constant profiles, and two-level step profiles whose
    values are 0/1.  Anything else must use the lineage-resolved route.
    """
    vals = set(w0.values)
    if len(vals) == 1:
        return float(w0.values[0]) ** count
    if len(w0.breakpoints) == 1 and vals <= {0.0, 1.0}:
        c = w0.breakpoints[0]
        if w0.values[0] == 1.0:      # ones west of c
            return 1.0 if mx < c else 0.0
        return 1.0 if mn > c else 0.0    # ones east of c
    raise ParameterError(
        "profile shape needs the lineage-resolved dual route"
    )


@dataclass(frozen=True)
class DualityReport:
    """Two-sided moment-duality comparison at fixed evaluation points."""

    forward_mean: float
    forward_se: float
    dual_mean: float
    dual_se: float
    z: float
    replicates: int
    dual_replicates: int
    eval_points: tuple[float, ...]
    T: float
    n: int
    alpha: float
    upsilon: float
    seed: int

    def to_json(self) -> str:
        return json.dumps({
            "forward_mean": self.forward_mean,
            "forward_se": self.forward_se,
            "dual_mean": self.dual_mean,
            "dual_se": self.dual_se,
            "z": self.z,
            "replicates": self.replicates,
            "dual_replicates": self.dual_replicates,
            "eval_points": list(self.eval_points),
            "T": self.T,
            "n": self.n,
            "alpha": self.alpha,
            "upsilon": self.upsilon,
            "seed": self.seed,
        }, indent=2)


def duality_check(
    w0: AlleleProfile,
    eval_points,
    T: float,
    params: ModelParams,
    replicates: int,
    *,
    dual_replicates: int | None = None,
    dual_engine: str = "auto",
    tag: str = "duality",
    budget: int = 200_000_000,
) -> DualityReport:
    """Compare E[prod w_T(x_j)] against the lineage-system estimate.

    The forward side evolves the profile ``replicates`` times and averages
    the product over the evaluation points.  The dual side runs the lineage
    system from those points and averages the product of the *initial*
    profile over the final lineage positions.  Reports both means, standard
    errors, and the two-sample z-score.
    """
    xs = tuple(float(x) for x in eval_points)
    if not xs:
        raise ParameterError("need at least one evaluation point")
    if dual_replicates is None:
        dual_replicates = replicates
    fwd = forward_moment_batch(w0, xs, T, params, replicates,
                               tag=tag + "-f", budget=budget)
    f_mean = float(np.mean(fwd))
    f_se = float(np.std(fwd, ddof=1)) / math.sqrt(len(fwd))

    use_kernel = dual_engine == "kernel"
    if dual_engine == "auto":
        try:
            _dual_product_from_extremes(w0, 0.0, 0.0, 1)
            use_kernel = len(xs) == 1
        except ParameterError:
            use_kernel = False
    if use_kernel:
        if len(xs) != 1:
            raise ParameterError(
                "the extremes-based dual route supports one start point"
            )
        from .dual import extremal_ancestor_batch
        mn, mx, m, _, status, _ = extremal_ancestor_batch(
            xs[0], T, params, dual_replicates, tag=tag + "-d")
        if np.any(status != _kernels.STATUS_OK):
            raise BudgetError("dual batch exceeded its budget or capacity")
        dual_vals = np.array([
            _dual_product_from_extremes(w0, float(mn[k]), float(mx[k]),
                                        int(m[k]))
            for k in range(dual_replicates)
        ])
    else:
        from .dual import run_dual
        vals = []
        for k in range(dual_replicates):
            graph = run_dual(list(xs), T, params, replicate=k,
                             strategy="hitting")
            prod = 1.0
            for p in graph.final_state.lineages.values():
                prod *= w0.value(p)
            vals.append(prod)
        dual_vals = np.array(vals)
    d_mean = float(np.mean(dual_vals))
    d_se = float(np.std(dual_vals, ddof=1)) / math.sqrt(len(dual_vals))
    spread = math.hypot(f_se, d_se)
    z = 0.0 if spread == 0.0 else (f_mean - d_mean) / spread
    return DualityReport(
        forward_mean=f_mean, forward_se=f_se,
        dual_mean=d_mean, dual_se=d_se, z=z,
        replicates=replicates, dual_replicates=dual_replicates,
        eval_points=xs, T=T, n=params.n, alpha=params.alpha,
        upsilon=params.upsilon, seed=params.seed,
    )
