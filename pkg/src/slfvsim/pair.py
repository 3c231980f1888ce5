"""Coupled left-most/right-most walk with regime clocks and constant estimators.

The two extremal walks started from ``yl <= yr`` are driven by one shared
event stream.  The pair is *coalesced* when the walks agree, *nearby* when
their gap is positive but at most twice the maximal rescaled radius, and
*separated* beyond that; the clocks C, N, S accumulate the time spent in each
regime.

Displacements decompose into a neutral part (symmetric jumps, the martingale
component) and selective parts (jumps to the west-most or east-most of two
potential parents, the drift component).  The drift and diffusion constants of
the rescaled walks are estimated here, and the diffusion estimate arbitrates
between the two candidate values carried by
:func:`slfvsim.params.limit_constants`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import BudgetError, ParameterError
from .events import NEUTRAL, next_event_hitting
from .params import ModelParams, limit_constants, per_point_event_rate
from .streams import spawn_seeds, substream

COALESCED = "coalesced"
NEARBY = "nearby"
SEPARATED = "separated"

SOURCE_NEUTRAL = "neutral"
SOURCE_SELECTIVE_LEFT = "selective-left"
SOURCE_SELECTIVE_RIGHT = "selective-right"

_CLOCK_TOL = 1e-9


def classify_regime(gap: float, threshold: float) -> str:
    """Regime of a pair with the given nonnegative gap."""
    if gap < 0.0:
        raise ParameterError("pair gap cannot be negative")
    if gap == 0.0:
        return COALESCED
    return NEARBY if gap <= threshold else SEPARATED


@dataclass(frozen=True)
class PairState:
    """Snapshot of the coupled pair with its regime and clocks."""

    L: float
    R: float
    regime: str
    C: float
    N: float
    S: float
    near_threshold: float

    def __post_init__(self) -> None:
        if self.L > self.R:
            raise ParameterError("pair ordering violated: L > R")
        if min(self.C, self.N, self.S) < 0.0:
            raise ParameterError("clocks must be nonnegative")
        expected = classify_regime(self.R - self.L, self.near_threshold)
        if self.regime != expected:
            raise ParameterError(
                f"regime {self.regime!r} inconsistent with gap "
                f"{self.R - self.L} and threshold {self.near_threshold}"
            )

    @property
    def gap(self) -> float:
        return self.R - self.L

    @property
    def elapsed(self) -> float:
        return self.C + self.N + self.S


@dataclass(frozen=True)
class WalkIncrement:
    """One component displacement with its source classification."""

    time: float
    delta: float
    source: str
    component: str          # "left", "right" or "both"
    event_id: int

    def __post_init__(self) -> None:
        if self.source not in (SOURCE_NEUTRAL, SOURCE_SELECTIVE_LEFT,
                               SOURCE_SELECTIVE_RIGHT):
            raise ParameterError(f"unknown increment source {self.source!r}")
        if self.component not in ("left", "right", "both"):
            raise ParameterError(f"unknown component {self.component!r}")


@dataclass(frozen=True)
class PairTrajectory:
    """States after every effective event plus the component increment log."""

    times: tuple[float, ...]
    states: tuple[PairState, ...]
    increments: tuple[WalkIncrement, ...]

    def first_separation(self) -> float | None:
        """Time of the first transition out of the coalesced regime."""
        for prev, state, t in zip(self.states, self.states[1:], self.times[1:]):
            if prev.regime == COALESCED and state.regime != COALESCED:
                return t
        return None

    @property
    def final(self) -> PairState:
        return self.states[-1]


# ---------------------------------------------------------------------------
# jump-law samplers (unscaled; callers divide displacements by sqrt(n))
# ---------------------------------------------------------------------------

def sample_neutral_jump(r: float, rng: np.random.Generator) -> float:
    """One neutral walk jump Z - U with Z, U independent uniform on [0, 2r]."""
    if r <= 0.0:
        raise ParameterError("radius must be positive")
    return 2.0 * r * (rng.random() - rng.random())


def sample_selective_jumps(r: float,
                           rng: np.random.Generator) -> tuple[float, float]:
    """Westward and eastward selective jumps from one event.

    Draws U1, U2, Y independent uniform on [0, 2r] and returns
    (min(U1, U2) - Y, max(U1, U2) - Y); the components share Y, matching the
    two extremal choices offered by a single selective event.
    """
    if r <= 0.0:
        raise ParameterError("radius must be positive")
    u1 = 2.0 * r * rng.random()
    u2 = 2.0 * r * rng.random()
    while u2 == u1:
        u2 = 2.0 * r * rng.random()
    y = 2.0 * r * rng.random()
    return min(u1, u2) - y, max(u1, u2) - y


# ---------------------------------------------------------------------------
# coupled pair run (reference implementation)
# ---------------------------------------------------------------------------

def run_pair(
    yl: float,
    yr: float,
    T: float,
    params: ModelParams,
    *,
    rng: np.random.Generator | None = None,
    replicate: int = 0,
    max_events: int = 5_000_000,
) -> PairTrajectory:
    """Evolve the coupled extremal pair on one shared event stream.

    Requires full impact (upsilon = 1), where the pair dynamics are
    autonomous.  Events covering both walks move them with shared draws
    (neutral events coalesce them, selective events send them to the west-
    and east-most potential parents); events covering one walk move it alone.
    Clocks accumulate by the regime holding before each event; the identity
    C + N + S = elapsed time holds to float rounding.
    """
    if yl > yr:
        raise ParameterError("need yl <= yr")
    if T <= 0.0:
        raise ParameterError("need T > 0")
    if params.upsilon != 1.0:
        raise ParameterError("the autonomous pair requires upsilon = 1")
    if rng is None:
        rng = substream(params.seed, replicate, "pair")
    threshold = 2.0 * params.max_rescaled_radius
    two_rho = threshold  # a single event displaces by at most this much

    L, R = float(yl), float(yr)
    C = N = S = 0.0
    t = 0.0
    times = [0.0]
    states = [PairState(L, R, classify_regime(R - L, threshold),
                        0.0, 0.0, 0.0, threshold)]
    increments: list[WalkIncrement] = []
    n_events = 0

    while True:
        event = next_event_hitting(params, [L, R], t, rng)
        hold = min(event.t, T) - t
        regime = classify_regime(R - L, threshold)
        if regime == COALESCED:
            C += hold
        elif regime == NEARBY:
            N += hold
        else:
            S += hold
        if event.t >= T:
            break
        t = event.t
        n_events += 1
        if n_events > max_events:
            raise BudgetError("event budget exceeded in run_pair",
                              time_reached=t, count=n_events)
        cov_l = event.covers(L)
        cov_r = event.covers(R)
        eid = n_events
        new_L, new_R = L, R
        if event.kind == NEUTRAL:
            z = event.z1
            if cov_l and cov_r and L == R:
                increments.append(WalkIncrement(t, z - L, SOURCE_NEUTRAL,
                                               "both", eid))
                new_L = new_R = z
            else:
                if cov_l:
                    increments.append(WalkIncrement(t, z - L, SOURCE_NEUTRAL,
                                                    "left", eid))
                    new_L = z
                if cov_r:
                    increments.append(WalkIncrement(t, z - R, SOURCE_NEUTRAL,
                                                    "right", eid))
                    new_R = z
        else:
            if cov_l:
                increments.append(WalkIncrement(
                    t, event.z1 - L, SOURCE_SELECTIVE_LEFT, "left", eid))
                new_L = event.z1
            if cov_r:
                increments.append(WalkIncrement(
                    t, event.z2 - R, SOURCE_SELECTIVE_RIGHT, "right", eid))
                new_R = event.z2
        for inc in increments[-2:]:
            if inc.event_id == eid and abs(inc.delta) > two_rho * (1 + 1e-12):
                raise ParameterError(
                    f"increment {inc.delta} exceeds the two-radius bound "
                    f"{two_rho}"
                )
        L, R = new_L, new_R
        if L > R:
            raise ParameterError("extremal pair crossed; dynamics violated")
        times.append(t)
        states.append(PairState(L, R, classify_regime(R - L, threshold),
                                C, N, S, threshold))

    times.append(T)
    states.append(PairState(L, R, classify_regime(R - L, threshold),
                            C, N, S, threshold))
    total = C + N + S
    if abs(total - T) > _CLOCK_TOL * max(1.0, T):
        raise ParameterError(
            f"clock identity violated: C+N+S = {total} over horizon {T}"
        )
    return PairTrajectory(tuple(times), tuple(states), tuple(increments))


# ---------------------------------------------------------------------------
# kernel-backed batches
# ---------------------------------------------------------------------------

def pair_batch(
    params: ModelParams,
    yl: float,
    yr: float,
    T: float,
    replicates: int,
    *,
    tag: str = "pair-batch",
    budget: int = 50_000_000,
):
    """Vectorized pair runs; returns (L, R, C, N, S, first separation, events).

    First-separation entries are -1 for replicates that never left the
    coalesced regime.
    """
    if params.upsilon != 1.0:
        raise ParameterError("the autonomous pair requires upsilon = 1")
    if yl > yr:
        raise ParameterError("need yl <= yr")
    seeds = spawn_seeds(params.seed, replicates, tag)
    L, R, C, N, S, sep, events, status = _kernels.pair_forward_batch(
        seeds, params.n, params.alpha,
        np.asarray(params.mu.radii), np.asarray(params.mu.weights),
        float(yl), float(yr), float(T), budget,
    )
    if np.any(status == _kernels.STATUS_BUDGET):
        raise BudgetError("event budget exceeded in pair batch")
    return L, R, C, N, S, sep, events


def trace_displacements(
    params: ModelParams,
    T: float,
    replicates: int,
    *,
    side: str = "right",
    tag: str = "trace",
) -> np.ndarray:
    """Terminal displacements of a single extremal trace (kernel route)."""
    seeds = spawn_seeds(params.seed, replicates, f"{tag}-{side}")
    return _kernels.trace_endpoint_batch(
        seeds, params.n, params.alpha,
        np.asarray(params.mu.radii), np.asarray(params.mu.weights),
        float(T), 1 if side == "right" else -1,
    )


def trace_displacement_reference(
    params: ModelParams,
    T: float,
    rng: np.random.Generator,
    *,
    side: str = "right",
) -> float:
    """One trace displacement assembled from the jump-law samplers.

    Independent route from the kernel: the jump count is Poisson with the
    per-point event rate and each jump is drawn by
    :func:`sample_neutral_jump` / :func:`sample_selective_jumps` (divided by
    sqrt(n)), using the closed-form jump laws rather than explicit events.
    """
    rate = per_point_event_rate(params.n, params.mu)
    count = rng.poisson(rate * T)
    radii = np.asarray(params.mu.radii)
    probs = np.asarray(params.mu.weights) * radii
    probs = probs / probs.sum()
    s_n = params.s_n
    x = 0.0
    for _ in range(int(count)):
        r = float(radii[rng.choice(len(radii), p=probs)] if len(radii) > 1
                  else radii[0])
        if rng.random() < s_n:
            west, east = sample_selective_jumps(r, rng)
            x += (east if side == "right" else west) / params.sqrt_n
        else:
            x += sample_neutral_jump(r, rng) / params.sqrt_n
    return x


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DriftDiffusionReport:
    """Estimated drift/diffusion constants with their candidate comparison."""

    zeta_hat: float
    zeta_se: float
    xi2_hat: float
    xi2_se: float
    n: int
    replicates: int
    seed: int
    zeta_theory: float
    xi2_reported_theory: float
    xi2_derived_theory: float
    xi2_supported: str       # "reported" or "derived"

    def to_json(self) -> str:
        return json.dumps({
            "zeta_hat": self.zeta_hat,
            "zeta_se": self.zeta_se,
            "xi2_hat": self.xi2_hat,
            "xi2_se": self.xi2_se,
            "n": self.n,
            "replicates": self.replicates,
            "seed": self.seed,
            "zeta_theory": self.zeta_theory,
            "xi2_reported_theory": self.xi2_reported_theory,
            "xi2_derived_theory": self.xi2_derived_theory,
            "xi2_supported": self.xi2_supported,
        }, indent=2)


def estimate_drift_diffusion(
    params: ModelParams,
    T: float,
    replicates: int,
    *,
    engine: str = "kernel",
    tag: str = "dd",
) -> DriftDiffusionReport:
    """Estimate the drift and diffusion constants of the rescaled walks.

    The drift estimate is the mean terminal displacement of a single
    east-most trace divided by T.  The diffusion estimate isolates the
    martingale part by running with the selection parameter set to zero and
    taking the variance of the terminal displacement divided by T; it is then
    compared against the two candidate constants and the closer one is
    recorded as supported.
    """
    if T <= 0.0 or replicates < 2:
        raise ParameterError("need T > 0 and at least two replicates")
    neutral = params.with_(alpha=0.0)
    if engine == "kernel":
        drift_disp = trace_displacements(params, T, replicates,
                                         side="right", tag=tag)
        var_disp = trace_displacements(neutral, T, replicates,
                                       side="right", tag=tag + "-n")
    elif engine == "reference":
        rng_d = substream(params.seed, 0, tag + "-ref")
        rng_v = substream(params.seed, 0, tag + "-ref-n")
        drift_disp = np.array([
            trace_displacement_reference(params, T, rng_d)
            for _ in range(replicates)
        ])
        var_disp = np.array([
            trace_displacement_reference(neutral, T, rng_v)
            for _ in range(replicates)
        ])
    else:
        raise ParameterError(f"unknown engine {engine!r}")

    zeta_hat = float(np.mean(drift_disp)) / T
    zeta_se = float(np.std(drift_disp, ddof=1)) / (math.sqrt(replicates) * T)
    v = float(np.var(var_disp, ddof=1))
    centred = var_disp - np.mean(var_disp)
    m4 = float(np.mean(centred ** 4))
    var_of_var = max(m4 - v * v, 0.0) / replicates
    xi2_hat = v / T
    xi2_se = math.sqrt(var_of_var) / T

    consts = limit_constants(params.alpha, params.mu)
    d_rep = abs(xi2_hat - consts.xi2_reported)
    d_der = abs(xi2_hat - consts.xi2_derived)
    supported = "derived" if d_der <= d_rep else "reported"
    return DriftDiffusionReport(
        zeta_hat=zeta_hat, zeta_se=zeta_se,
        xi2_hat=xi2_hat, xi2_se=xi2_se,
        n=params.n, replicates=replicates, seed=params.seed,
        zeta_theory=consts.zeta,
        xi2_reported_theory=consts.xi2_reported,
        xi2_derived_theory=consts.xi2_derived,
        xi2_supported=supported,
    )


def nearby_occupation(
    params: ModelParams,
    T: float,
    replicates: int,
    *,
    engine: str = "kernel",
    tag: str = "nearby",
) -> tuple[float, float]:
    """Mean time the pair started coalesced spends in the nearby regime.

    Returns (mean, standard error).
    """
    if params.upsilon != 1.0:
        raise ParameterError("the autonomous pair requires upsilon = 1")
    if engine == "kernel":
        _, _, _, N, _, _, _ = pair_batch(params, 0.0, 0.0, T, replicates,
                                         tag=tag)
        N = np.asarray(N)
    elif engine == "reference":
        vals = []
        for k in range(replicates):
            traj = run_pair(0.0, 0.0, T, params, replicate=k)
            vals.append(traj.final.N)
        N = np.array(vals)
    else:
        raise ParameterError(f"unknown engine {engine!r}")
    mean = float(np.mean(N))
    se = float(np.std(N, ddof=1)) / math.sqrt(len(N)) if len(N) > 1 else 0.0
    return mean, se
