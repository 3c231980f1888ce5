"""Cadlag path containers and the compactified path metric space.

Real-valued cadlag paths (piecewise-constant between event times) are mapped
into a compact coordinate system where whole-path distances can be compared
across different starting times and unbounded positions:

* time is compactified by t -> tanh(t), so real times live in (-1, 1) and the
  slots [1, 2] / {t : t <= -1} act as pinned padding;
* a path f becomes fbar(t) = tanh(f(atanh(t))) / (1 + |atanh(t)|), which obeys
  the envelope bound |fbar(t)| <= 1 / (1 + |atanh(t)|) with equality exactly
  for the two boundary paths that sit at +/- infinity.

Distances between compactified paths use Skorohod-style time changes lambda;
two time-change costs are supported:

* ``d_prime``: uniform cost  sup_t |lambda(t) - t|;
* ``rho_upper`` (used by ``d_M``): chord log-slope cost
  sup_{s<t} |log((lambda(t)-lambda(s)) / (t-s))|.

The infimum over lambda is taken over the family of piecewise-linear time
changes that monotonically match a subset of one path's jump times to a subset
of the other's, pinning lambda(sigma_g) = sigma_h, lambda(1) = 1 and
lambda(2) = 2.  For piecewise-constant paths this family contains an optimal
time change for ``d_prime``; for the log-slope cost optimality is not claimed
and the returned values are upper bounds (flagged as such in the reports).
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field

from .errors import BudgetError, ParameterError

__all__ = [
    "CadlagPath",
    "GPath",
    "BOUNDARY_PLUS",
    "BOUNDARY_MINUS",
    "step_path",
    "compactify",
    "d_prime",
    "rho_upper",
    "d_M",
    "d_prime_M",
    "matching_cost",
    "GridPath",
    "sup_metric_continuous",
    "hausdorff_distance",
    "interpolate",
    "margins_for_trace",
]

METRIC_JUMP_BUDGET = 48


# ---------------------------------------------------------------------------
# real-time cadlag paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CadlagPath:
    """Right-continuous step path: value v0 on [sigma, t_1), then the listed
    jump values.  ``t_end`` bounds the simulated horizon; evaluation beyond it
    (and after the last jump) is constant, matching paths that are frozen once
    their dynamics stop."""

    sigma: float
    v0: float
    jumps: tuple[tuple[float, float], ...] = ()
    t_end: float = math.inf

    def __post_init__(self):
        last = self.sigma
        for t, _ in self.jumps:
            if not t > last:
                raise ParameterError("jump times must be strictly increasing after sigma")
            last = t

    @property
    def jump_times(self) -> list[float]:
        return [t for t, _ in self.jumps]

    def value(self, t: float) -> float:
        if t < self.sigma:
            raise ParameterError(f"evaluation at {t} before path birth {self.sigma}")
        idx = bisect.bisect_right(self.jump_times, t)
        return self.v0 if idx == 0 else self.jumps[idx - 1][1]

    def final_value(self) -> float:
        return self.jumps[-1][1] if self.jumps else self.v0

    def jump_sizes(self) -> list[float]:
        vals = [self.v0] + [v for _, v in self.jumps]
        return [b - a for a, b in zip(vals, vals[1:])]

    def to_json(self) -> str:
        return json.dumps({"sigma": self.sigma, "v0": self.v0,
                           "jumps": [[t, v] for t, v in self.jumps],
                           "t_end": None if math.isinf(self.t_end) else self.t_end})

    @classmethod
    def from_json(cls, text: str) -> "CadlagPath":
        data = json.loads(text)
        t_end = data.get("t_end")
        return cls(data["sigma"], data["v0"],
                   tuple((float(t), float(v)) for t, v in data["jumps"]),
                   math.inf if t_end is None else float(t_end))


# ---------------------------------------------------------------------------
# compact coordinates
# ---------------------------------------------------------------------------

def _envelope(t: float) -> float:
    at = abs(t)
    if at >= 1.0:
        return 0.0
    return 1.0 / (1.0 + abs(math.atanh(t)))


def _seg_value(seg: tuple, t: float) -> float:
    kind, a = seg
    if kind == "const":
        return a
    return a * _envelope(t)  # 'env' segment: amplitude a in [-1, 1]


@dataclass(frozen=True)
class GPath:
    """Compact-coordinate path on [sigma, 2], sigma in [-1, 1].

    ``segs[i]`` rules [T_i, T_{i+1}) with T_0 = sigma, interior boundaries the
    jump times, and the final segment extending through 2.  Segments are either
    ``("const", v)`` with v in [-1, 1] (synthetic step paths, constant on
    [1, 2] by construction) or ``("env", a)`` (compactified real paths, whose
    value a * envelope(t) decays to 0 at |t| = 1 and stays 0 on [1, 2]).
    """

    sigma: float
    knots: tuple[float, ...]
    segs: tuple[tuple, ...]

    def __post_init__(self):
        if not (-1.0 <= self.sigma <= 1.0):
            raise ParameterError("sigma must lie in [-1, 1]")
        if len(self.segs) != len(self.knots) + 1:
            raise ParameterError("need exactly one more segment than knots")
        last = self.sigma
        for t in self.knots:
            if not (last < t <= 1.0):
                raise ParameterError("knots must increase strictly within (sigma, 1]")
            last = t
        for kind, a in self.segs:
            if kind not in ("const", "env"):
                raise ParameterError(f"unknown segment kind {kind!r}")
            if not (-1.0 <= a <= 1.0):
                raise ParameterError("segment amplitude must lie in [-1, 1]")

    def value(self, t: float) -> float:
        if t < self.sigma or t > 2.0:
            raise ParameterError("evaluation outside [sigma, 2]")
        idx = bisect.bisect_right(self.knots, t)
        return _seg_value(self.segs[idx], t)

    def envelope_ok(self) -> bool:
        """Exact check of the envelope bound at knots and segment interiors."""
        for kind, a in self.segs:
            if kind == "env" and abs(a) > 1.0:
                return False
            if kind == "const" and abs(a) > 1.0:
                return False
        return True


BOUNDARY_PLUS = GPath(-1.0, (), (("env", 1.0),))
BOUNDARY_MINUS = GPath(-1.0, (), (("env", -1.0),))


def step_path(sigma: float, v0: float, jumps=()) -> GPath:
    """Synthetic piecewise-constant element of the compact path space."""
    knots = tuple(t for t, _ in jumps)
    segs = (("const", float(v0)),) + tuple(("const", float(v)) for _, v in jumps)
    return GPath(float(sigma), knots, segs)


def compactify(path: CadlagPath) -> GPath:
    """Map a real cadlag path into compact coordinates.

    sigma maps through tanh; jump times map through tanh; segment values v map
    to envelope amplitudes tanh(v).  The path is treated as constant after its
    last jump, so its compact image decays to 0 at t = 1 and is 0 on [1, 2].
    """
    sigma = math.tanh(path.sigma)
    knots = tuple(math.tanh(t) for t, _ in path.jumps)
    for a, b in zip(knots, knots[1:]):
        if not a < b:
            raise ParameterError("jump times collapse under compactification")
    segs = (("env", math.tanh(path.v0)),) + tuple(
        ("env", math.tanh(v)) for _, v in path.jumps)
    return GPath(sigma, knots, segs)


# ---------------------------------------------------------------------------
# segment-block suprema
# ---------------------------------------------------------------------------

def _sup_piece(seg_a: tuple, seg_b: tuple, u: float, v: float,
               b_u: float, b_v: float) -> float:
    """sup over [u, v] of |seg_a(t) - seg_b(lam(t))| for linear lam."""
    if seg_a[0] == "const" and seg_b[0] == "const":
        return abs(seg_a[1] - seg_b[1])
    if v <= u:
        return abs(_seg_value(seg_a, u) - _seg_value(seg_b, b_u))
    slope = (b_v - b_u) / (v - u)

    def lam(t: float) -> float:
        return b_u + slope * (t - u)

    def phi(t: float) -> float:
        return abs(_seg_value(seg_a, t) - _seg_value(seg_b, lam(t)))

    cands = [u, v]
    if u < 0.0 < v:
        cands.append(0.0)
    if slope != 0.0:
        t0 = u + (0.0 - b_u) / slope
        if u < t0 < v:
            cands.append(t0)
    grid_n = 9
    step = (v - u) / grid_n
    cands.extend(u + k * step for k in range(1, grid_n))
    cands.sort()
    best_i = max(range(len(cands)), key=lambda i: phi(cands[i]))
    best = phi(cands[best_i])
    lo = cands[max(best_i - 1, 0)]
    hi = cands[min(best_i + 1, len(cands) - 1)]
    # golden-section polish inside the bracketing interval
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    fc, fd = phi(c), phi(d)
    for _ in range(40):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = phi(d)
    return max(best, fc, fd)


def _block_value_sup(g: GPath, h: GPath, a0: float, a1: float,
                     b0: float, b1: float) -> float:
    """sup |g - h o lam| over [a0, a1) for the linear lam onto [b0, b1)."""
    if a1 <= a0:
        return 0.0
    slope = (b1 - b0) / (a1 - a0) if a1 > a0 else 0.0
    cuts = [a0, a1]
    cuts.extend(t for t in g.knots if a0 < t < a1)
    if slope > 0.0:
        cuts.extend(a0 + (t - b0) / slope for t in h.knots if b0 < t < b1)
    cuts = sorted(set(cuts))
    worst = 0.0
    for u, v in zip(cuts, cuts[1:]):
        mid = 0.5 * (u + v)
        seg_a = g.segs[bisect.bisect_right(g.knots, mid)]
        seg_b = h.segs[bisect.bisect_right(h.knots, b0 + slope * (mid - a0))]
        worst = max(worst, _sup_piece(seg_a, seg_b, u, v,
                                      b0 + slope * (u - a0),
                                      b0 + slope * (v - a0)))
    return worst


def _tail_cost(g: GPath, h: GPath) -> float:
    """Value mismatch on the pinned tail [1, 2] (identity time change)."""
    va = _seg_value(g.segs[-1], 1.5)
    vb = _seg_value(h.segs[-1], 1.5)
    return abs(va - vb)


# ---------------------------------------------------------------------------
# matching DP
# ---------------------------------------------------------------------------

def _matchable(p: GPath) -> list[float]:
    return [t for t in p.knots if t < 1.0]


def matching_cost(g: GPath, h: GPath, pairs, mode: str = "uniform") -> float:
    """Cost of the piecewise-linear time change through the given matched
    pairs (each (t_g, t_h)), including the pinned end points.  ``mode`` is
    ``uniform`` (sup |lam - t|) or ``slope`` (per-piece |log slope|)."""
    pins = [(g.sigma, h.sigma)] + sorted(pairs) + [(1.0, 1.0)]
    for (a0, b0), (a1, b1) in zip(pins, pins[1:]):
        if a1 < a0 or b1 < b0:
            raise ParameterError("matched pairs must be increasing in both paths")
    cost = 0.0
    if mode == "uniform":
        cost = max((abs(ta - tb) for ta, tb in pins), default=0.0)
    for (a0, b0), (a1, b1) in zip(pins, pins[1:]):
        if a1 == a0 and b1 == b0:
            continue
        if a1 == a0 or b1 == b0:
            return math.inf  # degenerate piece: not a bijection
        if mode == "slope":
            cost = max(cost, abs(math.log((b1 - b0) / (a1 - a0))))
        cost = max(cost, _block_value_sup(g, h, a0, a1, b0, b1))
    return max(cost, _tail_cost(g, h))


def _dp_min_cost(g: GPath, h: GPath, mode: str,
                 budget: int = METRIC_JUMP_BUDGET) -> float:
    A = _matchable(g)
    B = _matchable(h)
    if len(A) > budget or len(B) > budget:
        raise BudgetError(
            f"jump counts ({len(A)}, {len(B)}) exceed metric budget {budget}",
            count=max(len(A), len(B)))
    p, q = len(A), len(B)
    tail = _tail_cost(g, h)
    start = (g.sigma, h.sigma)
    end = (1.0, 1.0)
    if g.sigma == 1.0 and h.sigma == 1.0:
        return tail  # both domains collapse to the pinned tail [1, 2]
    if g.sigma == 1.0 or h.sigma == 1.0:
        return math.inf  # no increasing bijection with lambda(1) = 1 exists

    def trans(p0: tuple[float, float], p1: tuple[float, float]) -> float:
        (a0, b0), (a1, b1) = p0, p1
        if a1 <= a0 or b1 <= b0:
            return math.inf
        c = _block_value_sup(g, h, a0, a1, b0, b1)
        if mode == "uniform":
            c = max(c, abs(a1 - b1))
        else:
            c = max(c, abs(math.log((b1 - b0) / (a1 - a0))))
        return c

    base = abs(g.sigma - h.sigma) if mode == "uniform" else 0.0
    # best[i][j]: minimal max-cost over alignments whose last matched pair is
    # (A[i], B[j]); include the virtual start as predecessor of everything.
    best = [[math.inf] * q for _ in range(p)]
    order = [(i, j) for i in range(p) for j in range(q)]
    upper = max(base, trans(start, end), tail)  # match-nothing fallback
    for i, j in order:
        pair = (A[i], B[j])
        c = max(base, trans(start, pair))
        for i2 in range(i):
            for j2 in range(j):
                prev = best[i2][j2]
                if prev >= c and prev >= upper:
                    continue
                cand = max(prev, trans((A[i2], B[j2]), pair))
                if cand < c:
                    c = cand
        best[i][j] = c
    total = upper
    for i in range(p):
        for j in range(q):
            if best[i][j] < total:
                cand = max(best[i][j], trans((A[i], B[j]), end), tail)
                if cand < total:
                    total = cand
    return max(total, tail) if total < math.inf else max(upper, tail)


def _canonical_pair(g: GPath, h: GPath) -> tuple[GPath, GPath]:
    """Order two paths by a deterministic structural key.

    Both argument orders then execute identical float operations, making the
    symmetric distances below bitwise symmetric.
    """
    kg = (g.sigma, g.knots, g.segs)
    kh = (h.sigma, h.knots, h.segs)
    return (g, h) if kg <= kh else (h, g)


def d_prime(g: GPath, h: GPath, budget: int = METRIC_JUMP_BUDGET) -> float:
    """Skorohod-type distance with uniform time-change cost.

    Exact for piecewise-constant paths (the matching family contains an
    optimal time change); an upper bound for envelope segments, whose
    in-segment suprema are located numerically.
    """
    g, h = _canonical_pair(g, h)
    cost = _dp_min_cost(g, h, "uniform", budget)
    return max(cost, abs(g.sigma - h.sigma))


def rho_upper(g: GPath, h: GPath, budget: int = METRIC_JUMP_BUDGET) -> float:
    """Upper bound for the log-slope-cost distance rho over the DP family."""
    g, h = _canonical_pair(g, h)
    return _dp_min_cost(g, h, "slope", budget)


def d_M(f1, f2, budget: int = METRIC_JUMP_BUDGET) -> float:
    """Whole-path distance between real cadlag paths (or GPath boundaries).

    Computed as rho_upper on the compactified pair, combined with the
    compactified birth-time mismatch.  Upper-bound semantics inherited from
    ``rho_upper``.
    """
    g = f1 if isinstance(f1, GPath) else compactify(f1)
    h = f2 if isinstance(f2, GPath) else compactify(f2)
    return max(rho_upper(g, h, budget), abs(g.sigma - h.sigma))


def d_prime_M(f1, f2, budget: int = METRIC_JUMP_BUDGET) -> float:
    """Uniform-cost variant of :func:`d_M` (reported alongside it)."""
    g = f1 if isinstance(f1, GPath) else compactify(f1)
    h = f2 if isinstance(f2, GPath) else compactify(f2)
    return d_prime(g, h, budget)


# ---------------------------------------------------------------------------
# continuous grid paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridPath:
    """Continuous piecewise-linear path sampled on an increasing time grid."""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.times) != len(self.values) or len(self.times) < 1:
            raise ParameterError("grid path needs matching non-empty time/value arrays")
        for a, b in zip(self.times, self.times[1:]):
            if not a < b:
                raise ParameterError("grid times must increase strictly")

    @classmethod
    def from_uniform(cls, t0: float, dt: float, values) -> "GridPath":
        """Grid path on the uniform grid t0, t0 + dt, t0 + 2 dt, ..."""
        if dt <= 0.0:
            raise ParameterError("grid step must be positive")
        vals = tuple(float(v) for v in values)
        times = tuple(t0 + i * dt for i in range(len(vals)))
        return cls(times, vals)

    @property
    def sigma(self) -> float:
        return self.times[0]

    @property
    def dt(self) -> float:
        """Grid step; only meaningful for uniformly spaced paths."""
        if len(self.times) < 2:
            raise ParameterError("grid step undefined for a single-point path")
        return self.times[1] - self.times[0]

    def value(self, t: float) -> float:
        ts = self.times
        if t <= ts[0]:
            return self.values[0]
        if t >= ts[-1]:
            return self.values[-1]
        i = bisect.bisect_right(ts, t) - 1
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]


def _compact_eval(p: GridPath, tau: float) -> float:
    """Compactified value of a grid path at compact time tau in [-1, 1]."""
    if abs(tau) >= 1.0:
        return 0.0
    s = math.atanh(tau)
    return math.tanh(p.value(s)) / (1.0 + abs(s))


def sup_metric_continuous(p1: GridPath, p2: GridPath, refine: int = 1) -> float:
    """Sup-distance between compactified continuous paths.

    Uses the convention for paths born at different times: each path is
    evaluated at max(tau, its own compact birth time).  The supremum is taken
    over the union of both compact grids (plus dyadic refinement midpoints),
    so the result converges from below under refinement; the module tests
    pin the refinement tolerance.
    """
    s1 = math.tanh(p1.sigma)
    s2 = math.tanh(p2.sigma)
    taus = {-1.0, 0.0, 1.0, s1, s2}
    taus.update(math.tanh(t) for t in p1.times)
    taus.update(math.tanh(t) for t in p2.times)
    grid = sorted(taus)
    for _ in range(max(0, refine)):
        grid = sorted(set(grid) | {0.5 * (a + b) for a, b in zip(grid, grid[1:])})
    worst = abs(s1 - s2)
    for tau in grid:
        va = _compact_eval(p1, max(tau, s1))
        vb = _compact_eval(p2, max(tau, s2))
        worst = max(worst, abs(va - vb))
    return worst


def hausdorff_distance(paths_a, paths_b, metric) -> float:
    """Hausdorff distance between two finite path collections.

    Empty collections follow the isolated-point convention: two empty sets are
    at distance 0; an empty set is infinitely far from a non-empty one.
    """
    A = list(paths_a)
    B = list(paths_b)
    if not A and not B:
        return 0.0
    if not A or not B:
        return math.inf
    d_ab = max(min(metric(a, b) for b in B) for a in A)
    d_ba = max(min(metric(b, a) for a in A) for b in B)
    return max(d_ab, d_ba)


# ---------------------------------------------------------------------------
# jump interpolation
# ---------------------------------------------------------------------------

def margins_for_trace(event_times, event_intervals, cap: float = 0.05,
                      start: float | None = None) -> dict:
    """Interpolation margin per event: half the smallest temporal gap to any
    other event whose spatial interval overlaps, capped.

    ``event_intervals`` are the (lo, hi) spatial intervals, aligned with
    ``event_times``.  When ``start`` is given, each margin is additionally
    capped by the distance to that birth time, so the first ramp never
    reaches before the start of the traced path.
    """
    times = list(event_times)
    ivals = list(event_intervals)
    out = {}
    for i, t in enumerate(times):
        margin = cap
        if start is not None:
            if t <= start:
                raise ParameterError(
                    f"event at {t} does not follow the start time {start}")
            margin = min(margin, t - start)
        lo_i, hi_i = ivals[i]
        for j, s in enumerate(times):
            if j == i:
                continue
            lo_j, hi_j = ivals[j]
            if hi_i >= lo_j and hi_j >= lo_i:
                margin = min(margin, 0.5 * abs(t - s))
        if margin <= 0.0:
            raise ParameterError("coincident overlapping events leave no margin")
        out[t] = margin
    return out


def interpolate(path: CadlagPath, margins) -> GridPath:
    """Replace each jump at time tau by a linear ramp on [tau - margin, tau).

    ``margins`` maps jump time -> positive margin (a scalar is broadcast).
    Ramp intervals must not overlap each other or reach back beyond the birth
    time; violations raise a parameter error.  The interpolated path agrees
    with the original at every jump time and after the last jump, and the
    uniform gap is bounded by the largest jump magnitude.
    """
    if not path.jumps:
        return GridPath((path.sigma, path.sigma + 1.0), (path.v0, path.v0))
    get = margins.get if hasattr(margins, "get") else (lambda t, _m=float(margins): _m)
    times = [path.sigma]
    values = [path.v0]
    prev_ramp_end = path.sigma
    prev_value = path.v0
    for t, v in path.jumps:
        m = get(t, None) if hasattr(margins, "get") else get(t)
        if m is None or m <= 0.0:
            raise ParameterError(f"missing or non-positive margin for jump at {t}")
        lo = t - m
        if lo < prev_ramp_end:
            raise ParameterError(f"interpolation margins overlap near t = {t}")
        if lo > prev_ramp_end:
            times.append(lo)
            values.append(prev_value)
        times.append(t)
        values.append(v)
        prev_ramp_end = t
        prev_value = v
    end = max(path.t_end if math.isfinite(path.t_end) else times[-1] + 1.0,
              times[-1] + 1e-12)
    if end > times[-1]:
        times.append(end)
        values.append(prev_value)
    return GridPath(tuple(times), tuple(values))


def interpolation_gap(path: CadlagPath, interp: GridPath) -> float:
    """Exact sup-gap between a step path and its ramped version.

    Within each ramp the difference grows linearly from 0 to the jump size
    (approached at tau-), so the sup equals the largest jump magnitude.
    """
    return max((abs(s) for s in path.jump_sizes()), default=0.0)
