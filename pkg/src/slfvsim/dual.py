"""Branching-coalescing lineage system with genealogy and path diagnostics.

A lineage at position ``p`` is affected by a reproduction event when the event
interval covers ``p`` and an independent Bernoulli(upsilon) mark succeeds.  At
a neutral event all marked lineages are replaced by one lineage at the parent
position; at a selective event they are replaced by two lineages, one at each
potential parent.

With upsilon = 1 the extremal (left-most / right-most) members of the family
started from a point are autonomous walks and can be traced directly, both
forwards and backwards in time.  Backward traces land on event *endpoints*:

* neutral event, parent at v: jump to the west endpoint when the position is
  <= v, else to the east endpoint;
* selective event, parents v < v': west endpoint when the position is < v,
  east endpoint when it is > v', and for positions inside [v, v'] the
  left-most backward trace takes the east endpoint while the right-most takes
  the west one.

Backward traces are stored in absolute time as ``CadlagPath`` objects whose
domain runs from the bottom of the traced window up to the start point.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import BudgetError, DiagnosticFailure, ParameterError
from .events import (
    NEUTRAL,
    SELECTIVE,
    ReproductionEvent,
    iter_events_box,
    next_event_hitting,
    sample_events_box,
    sample_parents,
)
from .params import ModelParams, limit_constants
from .pathspace import CadlagPath
from .streams import kernel_seed, spawn_seeds, substream

LEFT = "left"
RIGHT = "right"
FORWARD = "forward"
BACKWARD = "backward"

ROLE_NEUTRAL = "neutral-parent"
ROLE_WEST = "selective-west"
ROLE_EAST = "selective-east"

DEFAULT_LINEAGE_BUDGET = 1_000_000
DEFAULT_HOP_BUDGET = 256
DEFAULT_LINEAGE_CAP = 200_000


# ---------------------------------------------------------------------------
# state and genealogy containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DualState:
    """Positions of the living lineages at one instant of dual time."""

    t: float
    lineages: dict[int, float]

    def __post_init__(self) -> None:
        if not self.lineages:
            raise ParameterError("a dual state must hold at least one lineage")

    @property
    def count(self) -> int:
        return len(self.lineages)

    @property
    def positions(self) -> tuple[float, ...]:
        return tuple(self.lineages.values())

    def extremal(self, side: str = RIGHT) -> float:
        vals = self.lineages.values()
        return max(vals) if side == RIGHT else min(vals)


@dataclass(frozen=True)
class GenealogyNode:
    id: int
    position: float
    birth_time: float


@dataclass(frozen=True)
class GenealogyEdge:
    """Edge from a pre-event lineage to one of its post-event replacements."""

    child: int
    parent: int
    event_id: int
    role: str


@dataclass
class GenealogyGraph:
    """Recorded ancestry of one dual run."""

    nodes: dict[int, GenealogyNode] = field(default_factory=dict)
    edges: list[GenealogyEdge] = field(default_factory=list)
    events: dict[int, ReproductionEvent] = field(default_factory=dict)
    start_ids: tuple[int, ...] = ()
    final_state: DualState | None = None
    interactions: int = 0

    @property
    def final_ids(self) -> tuple[int, ...]:
        if self.final_state is None:
            return ()
        return tuple(self.final_state.lineages)

    def parents_of(self, node_id: int) -> list[GenealogyEdge]:
        """Edges created when the given lineage was replaced."""
        return [e for e in self.edges if e.child == node_id]

    def origins_of(self, node_id: int) -> list[GenealogyEdge]:
        """Edges through which the given lineage came into being."""
        return [e for e in self.edges if e.parent == node_id]

    def ancestor_chain(self, node_id: int) -> list[int]:
        """Walk from a node back to a start node following creating edges."""
        chain = [node_id]
        current = node_id
        seen = {node_id}
        while current not in self.start_ids:
            incoming = self.origins_of(current)
            if not incoming:
                raise DiagnosticFailure(
                    f"lineage {current} has no origin and is not a start point"
                )
            current = incoming[0].child
            if current in seen:
                raise DiagnosticFailure("cycle detected in genealogy")
            seen.add(current)
            chain.append(current)
        return chain

    def branching_event_ids(self) -> set[int]:
        return {e.event_id for e in self.edges if e.role != ROLE_NEUTRAL}

    def to_json(self) -> str:
        payload = {
            "nodes": [
                {"id": n.id, "position": n.position, "birth_time": n.birth_time}
                for n in self.nodes.values()
            ],
            "edges": [
                {
                    "child": e.child,
                    "parent": e.parent,
                    "event_id": e.event_id,
                    "role": e.role,
                }
                for e in self.edges
            ],
            "events": [
                {
                    "id": eid,
                    "t": ev.t,
                    "x": ev.x,
                    "rho": ev.rho,
                    "kind": ev.kind,
                    "z1": ev.z1,
                    "z2": ev.z2,
                }
                for eid, ev in sorted(self.events.items())
            ],
            "start_ids": list(self.start_ids),
            "final_ids": list(self.final_ids),
            "interactions": self.interactions,
        }
        return json.dumps(payload, indent=2)


@dataclass(frozen=True)
class ExtremalTrace:
    """One traced extremal walk together with the events that moved it."""

    side: str
    direction: str
    path: CadlagPath
    events: tuple[ReproductionEvent, ...] = ()
    max_rescaled_radius: float | None = None

    def __post_init__(self) -> None:
        if self.side not in (LEFT, RIGHT):
            raise ParameterError(f"unknown side {self.side!r}")
        if self.direction not in (FORWARD, BACKWARD):
            raise ParameterError(f"unknown direction {self.direction!r}")
        if self.max_rescaled_radius is not None:
            bound = 2.0 * self.max_rescaled_radius * (1.0 + 1e-12)
            for size in self.path.jump_sizes():
                if abs(size) > bound:
                    raise ParameterError(
                        f"jump of size {size} exceeds twice the maximal "
                        f"rescaled radius {self.max_rescaled_radius}"
                    )


# ---------------------------------------------------------------------------
# single-event transition
# ---------------------------------------------------------------------------

def _mark(state: DualState, event: ReproductionEvent, upsilon: float,
          rng: np.random.Generator) -> list[int]:
    marked = []
    for lid, pos in state.lineages.items():
        if event.covers(pos) and rng.random() < upsilon:
            marked.append(lid)
    return marked


def apply_event(state: DualState, event: ReproductionEvent, upsilon: float,
                rng: np.random.Generator) -> DualState:
    """Advance the lineage system through one reproduction event."""
    new_state, _, _ = apply_event_detail(state, event, upsilon, rng)
    return new_state


def apply_event_detail(
    state: DualState,
    event: ReproductionEvent,
    upsilon: float,
    rng: np.random.Generator,
    next_id: int | None = None,
) -> tuple[DualState, list[int], list[tuple[int, float, str]]]:
    """As :func:`apply_event`, also reporting marked ids and replacements.

    Replacements are (new id, position, role) triples; ids are allocated from
    ``next_id`` (defaults to one past the current maximum id).
    """
    if event.t <= state.t:
        raise ParameterError(
            f"event time {event.t} is not after state time {state.t}"
        )
    if not 0.0 < upsilon <= 1.0:
        raise ParameterError("upsilon must lie in (0, 1]")
    marked = _mark(state, event, upsilon, rng)
    if not marked:
        return DualState(event.t, dict(state.lineages)), [], []
    if next_id is None:
        next_id = max(state.lineages) + 1
    survivors = {
        lid: pos for lid, pos in state.lineages.items() if lid not in marked
    }
    if event.kind == NEUTRAL:
        new_entries = [(next_id, event.z1, ROLE_NEUTRAL)]
    else:
        new_entries = [
            (next_id, event.z1, ROLE_WEST),
            (next_id + 1, event.z2, ROLE_EAST),
        ]
    for lid, pos, _ in new_entries:
        survivors[lid] = pos
    return DualState(event.t, survivors), marked, new_entries


# ---------------------------------------------------------------------------
# full dual run with genealogy
# ---------------------------------------------------------------------------

def _box_window(positions, pad: float) -> tuple[float, float]:
    lo = min(positions) - pad
    hi = max(positions) + pad
    return lo, hi


def run_dual(
    start_points,
    T: float,
    params: ModelParams,
    *,
    rng: np.random.Generator | None = None,
    replicate: int = 0,
    budget: int = DEFAULT_LINEAGE_BUDGET,
    strategy: str = "hitting",
    crossover: float = 0.5,
    box_pad: float | None = None,
    events=None,
) -> GenealogyGraph:
    """Run the branching-coalescing system from the given start points.

    ``strategy`` selects how driving events are produced: ``"hitting"`` draws
    only events that cover a lineage, ``"box"`` draws whole-window streams and
    filters, ``"auto"`` switches to box sampling whenever the covered length
    exceeds ``crossover`` times the box width.  When ``events`` is given
    (a pre-sampled, time-ordered sequence) the run is a deterministic fold
    over it and consumes ``rng`` only for marking.

    The budget counts lineage interactions (one per covering event plus one
    per covered lineage); exceeding it raises :class:`BudgetError`.
    """
    points = [float(p) for p in (
        start_points if hasattr(start_points, "__iter__") else [start_points]
    )]
    if not points or T <= 0.0:
        raise ParameterError("need at least one start point and T > 0")
    if strategy not in ("hitting", "box", "auto"):
        raise ParameterError(f"unknown sampling strategy {strategy!r}")
    if rng is None:
        rng = substream(params.seed, replicate, "dual")

    graph = GenealogyGraph()
    lineages = {}
    for i, p in enumerate(points):
        graph.nodes[i] = GenealogyNode(i, p, 0.0)
        lineages[i] = p
    graph.start_ids = tuple(range(len(points)))
    state = DualState(0.0, lineages)
    next_id = len(points)
    interactions = 0
    event_counter = itertools.count()

    def consume(event: ReproductionEvent) -> None:
        nonlocal state, next_id, interactions
        covered = sum(1 for p in state.lineages.values() if event.covers(p))
        interactions += 1 + covered
        if interactions > budget:
            raise BudgetError(
                "lineage-interaction budget exceeded",
                time_reached=state.t,
                count=interactions,
            )
        state, marked, born = apply_event_detail(
            state, event, params.upsilon, rng, next_id=next_id
        )
        if not marked:
            return
        eid = next(event_counter)
        graph.events[eid] = event
        for lid, pos, role in born:
            graph.nodes[lid] = GenealogyNode(lid, pos, event.t)
            next_id = max(next_id, lid + 1)
            for child in marked:
                graph.edges.append(GenealogyEdge(child, lid, eid, role))

    if events is not None:
        for event in events:
            if event.t >= T:
                break
            if any(event.covers(p) for p in state.lineages.values()):
                consume(event)
    else:
        rho_max = params.max_rescaled_radius
        if box_pad is None:
            box_pad = 10.0 * rho_max
        t = 0.0
        while t < T:
            positions = list(state.lineages.values())
            span = max(positions) - min(positions)
            covered = min(2.0 * rho_max * len(positions), span + 2.0 * rho_max)
            width = span + 2.0 * box_pad
            use_box = strategy == "box" or (
                strategy == "auto" and covered >= crossover * width
            )
            if use_box:
                a, b = _box_window(positions, box_pad)
                horizon = min(T, t + max(1.0 / params.n, 0.25 * T))
                escaped = False
                for event in iter_events_box(params, (a, b), rng, t0=t):
                    if event.t >= horizon:
                        break
                    if any(event.covers(p) for p in state.lineages.values()):
                        t = event.t
                        consume(event)
                        lo = min(state.lineages.values())
                        hi = max(state.lineages.values())
                        if lo < a or hi > b:
                            # a lineage left the exactly-covered core: drop
                            # the unread remainder of this stream and restart
                            # from a recentred window
                            escaped = True
                            break
                if not escaped:
                    t = horizon
            else:
                event = next_event_hitting(params, positions, t, rng)
                if event.t >= T:
                    break
                consume(event)
                t = event.t

    graph.final_state = DualState(T, dict(state.lineages))
    graph.interactions = interactions
    return graph


# ---------------------------------------------------------------------------
# extremal traces (upsilon = 1)
# ---------------------------------------------------------------------------

def _forward_choice(side: str, event: ReproductionEvent) -> float:
    """Parent position taken by a forward extremal path at a covering event."""
    if event.kind == NEUTRAL:
        return event.z1
    return event.z1 if side == LEFT else event.z2


def _backward_choice(side: str, pos: float, event: ReproductionEvent) -> float:
    """Endpoint taken by a backward extremal path at a covering event."""
    west = event.x - event.rho
    east = event.x + event.rho
    if event.kind == NEUTRAL:
        return west if pos <= event.z1 else east
    if pos < event.z1:
        return west
    if pos > event.z2:
        return east
    # position between the potential parents: the choice defines the side
    return east if side == LEFT else west


def _require_full_impact(params: ModelParams, what: str) -> None:
    if params.upsilon != 1.0:
        raise ParameterError(
            f"{what} is defined only for upsilon = 1; use extremal_ancestor "
            "for partial impact"
        )


def trace_forward_extremal(
    side: str,
    start: float,
    T: float,
    params: ModelParams,
    rng: np.random.Generator | None = None,
    *,
    replicate: int = 0,
    start_time: float = 0.0,
) -> ExtremalTrace:
    """Trace a single forward extremal walk over [start_time, start_time+T]."""
    _require_full_impact(params, "a forward extremal trace")
    if side not in (LEFT, RIGHT):
        raise ParameterError(f"unknown side {side!r}")
    if rng is None:
        rng = substream(params.seed, replicate, f"fwd-{side}")
    t_end = start_time + T
    pos = float(start)
    t = start_time
    jumps = []
    used = []
    while True:
        event = next_event_hitting(params, [pos], t, rng)
        if event.t >= t_end:
            break
        pos = _forward_choice(side, event)
        jumps.append((event.t, pos))
        used.append(event)
        t = event.t
    path = CadlagPath(sigma=start_time, v0=float(start), jumps=tuple(jumps),
                      t_end=t_end)
    return ExtremalTrace(side, FORWARD, path, tuple(used),
                         params.max_rescaled_radius)


def trace_backward_extremal(
    side: str,
    start: float,
    T: float,
    params: ModelParams,
    rng: np.random.Generator | None = None,
    *,
    replicate: int = 0,
    start_time: float = 0.0,
) -> ExtremalTrace:
    """Trace a backward extremal walk down to start_time - T.

    A fresh event stream is used: the driving process law is invariant under
    time reversal, so events covering the walker arrive at the same rate as
    forwards in time.
    """
    _require_full_impact(params, "a backward extremal trace")
    if side not in (LEFT, RIGHT):
        raise ParameterError(f"unknown side {side!r}")
    if rng is None:
        rng = substream(params.seed, replicate, f"bwd-{side}")
    t_bot = start_time - T
    pos = float(start)
    depth = 0.0
    values = [pos]          # positions, newest (deepest) last
    times = []              # absolute event times, descending
    used = []
    while True:
        event = next_event_hitting(params, [pos], depth, rng)
        if event.t >= T:
            break
        abs_time = start_time - event.t
        event_abs = ReproductionEvent(
            t=abs_time, x=event.x, rho=event.rho, kind=event.kind,
            z1=event.z1, z2=event.z2,
        )
        pos = _backward_choice(side, pos, event_abs)
        values.append(pos)
        times.append(abs_time)
        used.append(event_abs)
        depth = event.t
    # stored bottom-up: value values[k] holds on [times[k], times[k-1])
    jumps = tuple(
        (times[k], values[k]) for k in range(len(times) - 1, -1, -1)
    )
    path = CadlagPath(sigma=t_bot, v0=values[-1], jumps=jumps,
                      t_end=start_time)
    return ExtremalTrace(side, BACKWARD, path, tuple(used),
                         params.max_rescaled_radius)


def replay_forward_extremal(
    side: str,
    start: float,
    events,
    *,
    start_time: float = 0.0,
    t_end: float,
    max_rescaled_radius: float | None = None,
) -> ExtremalTrace:
    """Deterministic forward extremal trace over a stored event sequence."""
    pos = float(start)
    jumps = []
    used = []
    for event in events:
        if event.t <= start_time:
            continue
        if event.t >= t_end:
            break
        if event.covers(pos):
            pos = _forward_choice(side, event)
            jumps.append((event.t, pos))
            used.append(event)
    path = CadlagPath(sigma=start_time, v0=float(start), jumps=tuple(jumps),
                      t_end=t_end)
    return ExtremalTrace(side, FORWARD, path, tuple(used), max_rescaled_radius)


def replay_backward_extremal(
    side: str,
    start: float,
    events,
    *,
    start_time: float,
    t_bot: float,
    max_rescaled_radius: float | None = None,
) -> ExtremalTrace:
    """Deterministic backward extremal trace over the same stored events.

    Events are consumed in descending absolute time starting strictly below
    ``start_time``, stopping at ``t_bot``.
    """
    pos = float(start)
    values = [pos]
    times = []
    used = []
    for event in sorted(events, key=lambda e: e.t, reverse=True):
        if event.t >= start_time:
            continue
        if event.t < t_bot:
            break
        if event.covers(pos):
            pos = _backward_choice(side, pos, event)
            values.append(pos)
            times.append(event.t)
            used.append(event)
    jumps = tuple(
        (times[k], values[k]) for k in range(len(times) - 1, -1, -1)
    )
    path = CadlagPath(sigma=t_bot, v0=values[-1], jumps=jumps,
                      t_end=start_time)
    return ExtremalTrace(side, BACKWARD, path, tuple(used),
                         max_rescaled_radius)


# ---------------------------------------------------------------------------
# law-level jump sampling (for distributional comparisons)
# ---------------------------------------------------------------------------

def sample_covering_event(
    params: ModelParams,
    pos: float,
    kind: str,
    rng: np.random.Generator,
    t: float = 1.0,
) -> ReproductionEvent:
    """One event of the given kind, conditioned to cover the given position.

    The radius atom is chosen proportionally to weight times covering length,
    the centre is uniform over the covering interval, and parents are drawn
    uniformly inside the event interval.
    """
    radii = params.rescaled_radii
    weights = params.mu.weights
    masses = [w * 2.0 * r for w, r in zip(weights, radii)]
    total = sum(masses)
    u = rng.random() * total
    atom = len(masses) - 1
    for i, mass in enumerate(masses):
        if u <= mass:
            atom = i
            break
        u -= mass
    rho = radii[atom]
    c = pos + rho * (2.0 * rng.random() - 1.0)
    while not abs(c - pos) < rho:
        c = pos + rho * (2.0 * rng.random() - 1.0)
    parents = sample_parents(kind, c, rho, rng)
    z2 = parents[1] if kind == SELECTIVE else None
    return ReproductionEvent(t=t, x=c, rho=rho, kind=kind,
                             z1=parents[0], z2=z2)


def jump_law_samples(
    params: ModelParams,
    side: str,
    kind: str,
    replicates: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Forward jumps and negated backward jumps of one extremal class.

    Both samples are generated by the production choice rules applied to
    independent covering events at the origin.  For each class the negated
    backward displacement should match the forward displacement in law.
    """
    _require_full_impact(params, "an extremal jump law")
    if side not in (LEFT, RIGHT):
        raise ParameterError(f"unknown side {side!r}")
    fwd = np.empty(replicates)
    bwd = np.empty(replicates)
    for k in range(replicates):
        ev_f = sample_covering_event(params, 0.0, kind, rng)
        fwd[k] = _forward_choice(side, ev_f)
        ev_b = sample_covering_event(params, 0.0, kind, rng)
        bwd[k] = -_backward_choice(side, 0.0, ev_b)
    return fwd, bwd


# ---------------------------------------------------------------------------
# coupled families on one shared event stream
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoupledFamilies:
    """Forward and backward extremal traces replayed over shared events."""

    forward_left: tuple[ExtremalTrace, ...]
    forward_right: tuple[ExtremalTrace, ...]
    backward_left: tuple[ExtremalTrace, ...]
    backward_right: tuple[ExtremalTrace, ...]
    event_count: int

    @property
    def all_forward(self) -> tuple[ExtremalTrace, ...]:
        return self.forward_left + self.forward_right


def coupled_families(
    params: ModelParams,
    T: float,
    rng: np.random.Generator,
    *,
    forward_starts=(-0.5, 0.0, 0.5),
    backward_starts=(-0.5, 0.0, 0.5),
    window_halfwidth: float | None = None,
) -> CoupledFamilies:
    """Replay all four extremal families over one shared event stream.

    Forward traces run from time 0 to T, backward traces from time T down to
    0.  Every trace must stay inside the sampling window; a window shortfall
    raises so the caller can widen and retry.
    """
    _require_full_impact(params, "a coupled trace family")
    if window_halfwidth is None:
        consts = limit_constants(params.alpha, params.mu)
        spread = 6.0 * math.sqrt(consts.xi2_derived * T) \
            + params.max_rescaled_radius
        reach = max(
            [abs(float(y)) for y in forward_starts]
            + [abs(float(y)) for y in backward_starts]
        )
        window_halfwidth = reach + 4.0 * spread
    W = float(window_halfwidth)
    stream = sample_events_box(params, (-W, W), (0.0, T), rng)
    events = list(stream)
    rho_max = params.max_rescaled_radius

    def check(trace: ExtremalTrace) -> ExtremalTrace:
        vals = [trace.path.v0] + [v for _, v in trace.path.jumps]
        if max(abs(v) for v in vals) > W - 2.0 * rho_max:
            raise ParameterError(
                "trace approached the sampling window edge; widen the window"
            )
        return trace

    fwd_l = tuple(
        check(replay_forward_extremal(LEFT, y, events, start_time=0.0,
                                      t_end=T, max_rescaled_radius=rho_max))
        for y in forward_starts
    )
    fwd_r = tuple(
        check(replay_forward_extremal(RIGHT, y, events, start_time=0.0,
                                      t_end=T, max_rescaled_radius=rho_max))
        for y in forward_starts
    )
    bwd_l = tuple(
        check(replay_backward_extremal(LEFT, y, events, start_time=T,
                                       t_bot=0.0, max_rescaled_radius=rho_max))
        for y in backward_starts
    )
    bwd_r = tuple(
        check(replay_backward_extremal(RIGHT, y, events, start_time=T,
                                       t_bot=0.0, max_rescaled_radius=rho_max))
        for y in backward_starts
    )
    return CoupledFamilies(fwd_l, fwd_r, bwd_l, bwd_r, len(events))


# ---------------------------------------------------------------------------
# extremal ancestor for general impact
# ---------------------------------------------------------------------------

def extremal_ancestor(
    start: float,
    T: float,
    params: ModelParams,
    *,
    side: str = RIGHT,
    replicate: int = 0,
    budget: int = DEFAULT_LINEAGE_BUDGET,
    cap: int = DEFAULT_LINEAGE_CAP,
    engine: str = "kernel",
) -> float:
    """Extremal lineage position of the dual at time T from one start point."""
    if side not in (LEFT, RIGHT):
        raise ParameterError(f"unknown side {side!r}")
    if engine == "reference":
        graph = run_dual([start], T, params, replicate=replicate,
                         budget=budget)
        return graph.final_state.extremal(side)
    if engine != "kernel":
        raise ParameterError(f"unknown engine {engine!r}")
    seeds = spawn_seeds(params.seed, 1, f"ancestor-{replicate}")
    mn, mx, _, _, status, t_reached = _kernels.dual_extremal_batch(
        seeds, params.n, params.alpha, params.upsilon,
        np.asarray(params.mu.radii), np.asarray(params.mu.weights),
        float(start), float(T), budget, cap,
    )
    if status[0] == _kernels.STATUS_BUDGET:
        raise BudgetError("lineage-interaction budget exceeded",
                          time_reached=float(t_reached[0]))
    if status[0] == _kernels.STATUS_CAPACITY:
        raise BudgetError("lineage capacity exceeded",
                          time_reached=float(t_reached[0]))
    return float(mx[0] if side == RIGHT else mn[0])


def extremal_ancestor_batch(
    start: float,
    T: float,
    params: ModelParams,
    replicates: int,
    *,
    tag: str = "ancestor",
    budget: int = DEFAULT_LINEAGE_BUDGET,
    cap: int = DEFAULT_LINEAGE_CAP,
):
    """Vectorized replicates of :func:`extremal_ancestor`.

    Returns arrays (min, max, lineage count, interactions, status, time
    reached); statuses are 0 (completed), 1 (capacity), 2 (budget).
    """
    seeds = spawn_seeds(params.seed, replicates, tag)
    return _kernels.dual_extremal_batch(
        seeds, params.n, params.alpha, params.upsilon,
        np.asarray(params.mu.radii), np.asarray(params.mu.weights),
        float(start), float(T), budget, cap,
    )


def backward_pair_meeting_times(
    params: ModelParams,
    gap0: float,
    replicates: int,
    *,
    t_cap: float = 64.0,
    tag: str = "meeting",
    budget: int = 50_000_000,
):
    """First times at which a backward left/right pair closes its gap.

    The backward left-most trace starts at 0, the backward right-most at
    ``gap0`` east of it; both are traced down on a shared stream until the
    signed gap (right-most minus left-most) first reaches <= 0.  Returns
    (times, met flags).
    """
    if gap0 <= 0.0:
        raise ParameterError("initial gap must be positive")
    _require_full_impact(params, "a backward extremal pair")
    seeds = spawn_seeds(params.seed, replicates, tag)
    times, met, status = _kernels.backward_pair_meeting_batch(
        seeds, params.n, params.alpha,
        np.asarray(params.mu.radii), np.asarray(params.mu.weights),
        0.0, float(gap0), float(t_cap), budget,
    )
    if np.any(status == _kernels.STATUS_BUDGET):
        raise BudgetError("event budget exceeded in backward pair tracing")
    return times, met


def backward_pair_meeting_reference(
    params: ModelParams,
    gap0: float,
    *,
    rng: np.random.Generator,
    t_cap: float = 64.0,
) -> tuple[float, bool]:
    """Pure-Python replica of one backward-pair meeting replicate."""
    _require_full_impact(params, "a backward extremal pair")
    p_east = 0.0          # backward left-most: takes the east arrow on choice
    p_west = float(gap0)  # backward right-most: takes the west arrow
    t = 0.0
    while True:
        event = next_event_hitting(params, [p_east, p_west], t, rng)
        if event.t >= t_cap:
            return t_cap, False
        t = event.t
        new_east = p_east
        new_west = p_west
        if event.covers(p_east):
            new_east = _backward_choice(LEFT, p_east, event)
        if event.covers(p_west):
            new_west = _backward_choice(RIGHT, p_west, event)
        p_east, p_west = new_east, new_west
        if p_west - p_east <= 0.0:
            return t, True


# ---------------------------------------------------------------------------
# crossing detection and hopping
# ---------------------------------------------------------------------------

def _overlap(a: CadlagPath, b: CadlagPath) -> tuple[float, float]:
    lo = max(a.sigma, b.sigma)
    hi = min(a.t_end, b.t_end)
    return lo, hi


def _piece_grid(paths, lo: float, hi: float) -> list[float]:
    times = {lo, hi}
    for p in paths:
        for t, _ in p.jumps:
            if lo < t < hi:
                times.add(t)
    return sorted(times)


LEFT_TO_RIGHT = "left-to-right"
RIGHT_TO_LEFT = "right-to-left"


def detect_crossing(a: CadlagPath, b: CadlagPath) -> list[tuple[float, str]]:
    """All times at which path ``a`` crosses path ``b``, with directions.

    A crossing happens at the first instant the sign of a - b becomes
    strictly opposite to its most recent strictly nonzero value; touching
    zero and returning to the same side is not a crossing.
    """
    lo, hi = _overlap(a, b)
    if lo >= hi:
        return []
    grid = _piece_grid((a, b), lo, hi)
    crossings = []
    armed = 0
    for t in grid[:-1]:
        diff = a.value(t) - b.value(t)
        sign = 0 if diff == 0.0 else (1 if diff > 0.0 else -1)
        if sign == 0:
            continue
        if armed != 0 and sign != armed:
            crossings.append(
                (t, LEFT_TO_RIGHT if sign > 0 else RIGHT_TO_LEFT)
            )
        armed = sign
    return crossings


def hop_at(a: CadlagPath, b: CadlagPath, t: float) -> CadlagPath:
    """Follow ``a`` strictly before time t, then ``b`` from t onwards."""
    if not (a.sigma <= t and b.sigma <= t <= b.t_end):
        raise ParameterError("hop time must lie in both domains")
    head = [(u, v) for (u, v) in a.jumps if u < t]
    prev = head[-1][1] if head else a.v0
    tail = [(u, v) for (u, v) in b.jumps if u > t]
    joint = list(head)
    b_at_t = b.value(t)
    if b_at_t != prev:
        joint.append((t, b_at_t))
    joint.extend(tail)
    return CadlagPath(sigma=a.sigma, v0=a.v0, jumps=tuple(joint),
                      t_end=b.t_end)


def hop_cross(paths, budget: int = DEFAULT_HOP_BUDGET) -> list[CadlagPath]:
    """Closure of a finite path family under hopping at crossing times."""
    closure = list(paths)
    keys = {(p.sigma, p.v0, p.jumps, p.t_end) for p in closure}
    frontier = list(closure)
    while frontier:
        fresh = []
        for a in closure:
            for b in closure:
                if a is b:
                    continue
                for t, _ in detect_crossing(a, b):
                    for first, second in ((a, b), (b, a)):
                        try:
                            hopped = hop_at(first, second, t)
                        except ParameterError:
                            continue
                        key = (hopped.sigma, hopped.v0, hopped.jumps,
                               hopped.t_end)
                        if key not in keys:
                            keys.add(key)
                            fresh.append(hopped)
        if len(keys) > budget:
            raise BudgetError("hop closure exceeded the combinatorial budget",
                              count=len(keys))
        closure.extend(fresh)
        frontier = fresh
    return closure


# ---------------------------------------------------------------------------
# wedges
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Wedge:
    """Open region bounded by a backward right-most and left-most path."""

    r_hat: CadlagPath
    l_hat: CadlagPath
    s: float
    meet_time: float     # -inf when the boundaries never met below s

    @classmethod
    def from_pair(cls, r_hat: CadlagPath, l_hat: CadlagPath) -> "Wedge | None":
        s = min(r_hat.t_end, l_hat.t_end)
        lo = max(r_hat.sigma, l_hat.sigma)
        if s <= lo or r_hat.value(s) >= l_hat.value(s):
            return None
        grid = _piece_grid((r_hat, l_hat), lo, s)
        meet = -math.inf
        for left, right in zip(grid[:-1], grid[1:]):
            if r_hat.value(left) == l_hat.value(left):
                # boundaries equal on [left, right): the supremum of the
                # meeting set below s is the right edge of the piece
                meet = max(meet, right)
        return cls(r_hat, l_hat, s, meet)

    def contains(self, x: float, u: float) -> bool:
        if not self.meet_time < u < self.s:
            return False
        return self.r_hat.value(u) < x < self.l_hat.value(u)

    def closure_contains(self, x: float, u: float) -> bool:
        if not (self.meet_time <= u <= self.s):
            return False
        if u < max(self.r_hat.sigma, self.l_hat.sigma):
            return False
        return self.r_hat.value(u) <= x <= self.l_hat.value(u)


def enters_from_outside(path: CadlagPath, wedge: Wedge) -> bool:
    """True when the path is outside the wedge closure and later inside it."""
    lo = max(path.sigma, min(wedge.meet_time, wedge.s) if
             math.isfinite(wedge.meet_time) else path.sigma)
    hi = min(path.t_end, wedge.s)
    if hi <= path.sigma:
        return False
    grid = _piece_grid((path, wedge.r_hat, wedge.l_hat), path.sigma, hi)
    if math.isfinite(wedge.meet_time) and path.sigma < wedge.meet_time < hi:
        grid = sorted(set(grid) | {wedge.meet_time})
    seen_outside = False
    for t in grid[:-1]:
        x = path.value(t)
        if seen_outside and wedge.contains(x, t):
            return True
        if not wedge.closure_contains(x, t):
            seen_outside = True
    return False


def wedge_diagnostic(forward_paths, backward_right, backward_left) -> int:
    """Count forward paths entering a wedge of the backward families.

    Wedges are formed from every (right-most, left-most) backward pair whose
    top-time ordering admits one.  Returns the number of (path, wedge) pairs
    in violation; the coupled families of the full-impact system should
    produce zero.
    """
    wedges = []
    for r_hat in backward_right:
        r_path = r_hat.path if isinstance(r_hat, ExtremalTrace) else r_hat
        for l_hat in backward_left:
            l_path = l_hat.path if isinstance(l_hat, ExtremalTrace) else l_hat
            wedge = Wedge.from_pair(r_path, l_path)
            if wedge is not None:
                wedges.append(wedge)
    violations = 0
    for f in forward_paths:
        f_path = f.path if isinstance(f, ExtremalTrace) else f
        for wedge in wedges:
            if enters_from_outside(f_path, wedge):
                violations += 1
    return violations
