"""Reproduction-event sampling.

Events live in rescaled coordinates: an event has time t, centre x, half-width
rho = r / sqrt(n) and covers the closed interval [x - rho, x + rho].  The
driving Poisson process has intensity

    sqrt(n) dx  *  n dt  *  (radius atom w_i at r_i / sqrt(n))

so the centre density for atom i is n^(3/2) * w_i per unit rescaled space-time.
An event is selective with probability s_n = alpha / sqrt(n), neutral
otherwise.  Parent locations are drawn uniformly from the open interval
(x - rho, x + rho): one for a neutral event, two (ordered, a.s. distinct, with
exact collisions resampled) for a selective event.

Two sampling strategies are provided and are distributionally equivalent on
their common scope:

* :func:`sample_events_box` draws every event intersecting a space-time box
  (used when lineages densely cover the window);
* :func:`next_event_hitting` draws only the next event covering at least one
  of a finite set of positions (used for sparse lineage configurations).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, ParameterError
from .params import ModelParams

__all__ = [
    "ReproductionEvent",
    "EventStream",
    "sample_events_box",
    "iter_events_box",
    "next_event_hitting",
    "sample_parents",
    "merged_cover",
    "write_event_csv",
]

NEUTRAL = "neutral"
SELECTIVE = "selective"

DEFAULT_BOX_BUDGET = 20_000_000


@dataclass(frozen=True)
class ReproductionEvent:
    """One reproduction event (rescaled units).

    ``z1`` is the single parent of a neutral event; selective events carry the
    ordered pair ``z1 < z2``.
    """

    t: float
    x: float
    rho: float
    kind: str
    z1: float
    z2: float | None = None
    id: int = -1

    def __post_init__(self):
        if self.kind not in (NEUTRAL, SELECTIVE):
            raise ParameterError(f"unknown event kind {self.kind!r}")
        lo, hi = self.x - self.rho, self.x + self.rho
        if not (lo < self.z1 < hi):
            raise ParameterError("parent outside the open event interval")
        if self.kind == SELECTIVE:
            if self.z2 is None or not (lo < self.z2 < hi):
                raise ParameterError("selective event needs two interior parents")
            if not (self.z1 < self.z2):
                raise ParameterError("selective parents must be ordered z1 < z2")
        elif self.z2 is not None:
            raise ParameterError("neutral event carries a single parent")

    @property
    def interval(self) -> tuple[float, float]:
        return (self.x - self.rho, self.x + self.rho)

    def covers(self, y: float) -> bool:
        return self.x - self.rho <= y <= self.x + self.rho


@dataclass
class EventStream:
    """Time-ordered events produced for one space-time window."""

    events: list[ReproductionEvent]
    space: tuple[float, float]
    time: tuple[float, float]
    label: str = ""

    def __post_init__(self):
        for a, b in zip(self.events, self.events[1:]):
            if not (a.t < b.t):
                raise ParameterError("event times must be strictly increasing")

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)


def sample_parents(kind: str, x: float, rho: float, rng) -> tuple:
    """Draw parent location(s) uniformly inside the open event interval."""
    if kind == NEUTRAL:
        return (x + rho * _open_unit(rng),)
    z1 = x + rho * _open_unit(rng)
    z2 = x + rho * _open_unit(rng)
    while z2 == z1:  # exact float collision: resample
        z2 = x + rho * _open_unit(rng)
    return (min(z1, z2), max(z1, z2))


def _open_unit(rng) -> float:
    """Uniform on the open interval (-1, 1)."""
    while True:
        u = 2.0 * rng.random() - 1.0
        if -1.0 < u < 1.0:
            return u


def sample_events_box(params: ModelParams, space: tuple[float, float],
                      time: tuple[float, float], rng,
                      budget: int = DEFAULT_BOX_BUDGET,
                      label: str = "box") -> EventStream:
    """All events intersecting ``space`` x ``time``, in increasing time order.

    For each radius atom the centre window is enlarged by that atom's rescaled
    radius, so an event appears exactly when its interval meets the spatial
    window.  Expected totals beyond ``budget`` raise a budget error.
    """
    a, b = map(float, space)
    t0, t1 = map(float, time)
    if not (b >= a and t1 > t0):
        raise ParameterError("need space[1] >= space[0] and time[1] > time[0]")
    sqrt_n = params.sqrt_n
    density = params.n * sqrt_n
    expected = 0.0
    for r, w in zip(params.mu.radii, params.mu.weights):
        expected += density * w * (b - a + 2.0 * r / sqrt_n) * (t1 - t0)
    if expected > budget:
        raise BudgetError(
            f"expected event count {expected:.3g} exceeds budget {budget}",
            count=int(expected))

    records = []
    sn = params.s_n
    for r, w in zip(params.mu.radii, params.mu.weights):
        rho = r / sqrt_n
        lo, hi = a - rho, b + rho
        count = rng.poisson(density * w * (hi - lo) * (t1 - t0))
        ts = rng.uniform(t0, t1, size=count)
        xs = rng.uniform(lo, hi, size=count)
        kinds = rng.random(count) < sn
        for t, x, sel in zip(ts, xs, kinds):
            records.append((float(t), float(x), rho, bool(sel)))
    records.sort(key=lambda rec: rec[0])

    events = []
    for i, (t, x, rho, sel) in enumerate(records):
        kind = SELECTIVE if sel else NEUTRAL
        parents = sample_parents(kind, x, rho, rng)
        if kind == NEUTRAL:
            events.append(ReproductionEvent(t, x, rho, kind, parents[0], id=i))
        else:
            events.append(ReproductionEvent(t, x, rho, kind, parents[0], parents[1], id=i))
    return EventStream(events, (a, b), (t0, t1), label=label)


def iter_events_box(params: ModelParams, space: tuple[float, float],
                    rng, t0: float = 0.0, chunk: float = 1.0,
                    budget: int = DEFAULT_BOX_BUDGET):
    """Lazily yield box events in ascending time, one time chunk ahead.

    The lookahead buffer holds a single chunk, so total simulated time may be
    unbounded while memory stays bounded.
    """
    t = float(t0)
    while True:
        stream = sample_events_box(params, space, (t, t + chunk), rng,
                                   budget=budget)
        yield from stream.events
        t += chunk


def merged_cover(positions, half_width: float) -> list[tuple[float, float]]:
    """Merged union of intervals [p - h, p + h] over the given positions."""
    xs = sorted(float(p) for p in positions)
    if not xs:
        raise ParameterError("need at least one position")
    h = float(half_width)
    segs = []
    lo, hi = xs[0] - h, xs[0] + h
    for p in xs[1:]:
        if p - h <= hi:
            hi = p + h
        else:
            segs.append((lo, hi))
            lo, hi = p - h, p + h
    segs.append((lo, hi))
    return segs


def next_event_hitting(params: ModelParams, positions, t0: float,
                       rng) -> ReproductionEvent:
    """Sample the first event after t0 covering at least one given position.

    For atom i the covering centres form the union U_i of half-width
    r_i/sqrt(n) intervals around the positions; the arrival rate is
    n^(3/2) * sum_i w_i * |U_i|, the atom is chosen proportionally to
    w_i * |U_i|, and the centre is uniform on U_i.
    """
    density = params.n * params.sqrt_n
    covers = []
    rates = []
    for r, w in zip(params.mu.radii, params.mu.weights):
        segs = merged_cover(positions, r / params.sqrt_n)
        length = sum(hi - lo for lo, hi in segs)
        covers.append(segs)
        rates.append(density * w * length)
    total = sum(rates)
    dt = rng.exponential(1.0 / total)
    i = int(rng.choice(len(rates), p=np.asarray(rates) / total))
    rho = params.mu.radii[i] / params.sqrt_n
    x = _uniform_on_segments(covers[i], rng)
    kind = SELECTIVE if rng.random() < params.s_n else NEUTRAL
    parents = sample_parents(kind, x, rho, rng)
    if kind == NEUTRAL:
        return ReproductionEvent(t0 + dt, x, rho, kind, parents[0])
    return ReproductionEvent(t0 + dt, x, rho, kind, parents[0], parents[1])


def _uniform_on_segments(segs, rng) -> float:
    lengths = [hi - lo for lo, hi in segs]
    u = rng.random() * sum(lengths)
    for (lo, hi), length in zip(segs, lengths):
        if u <= length:
            return lo + u
        u -= length
    return segs[-1][1]  # guard against float round-off at the top end


def write_event_csv(stream: EventStream, path) -> None:
    """Dump a stream as CSV with header ``t,x,rho,kind,z1,z2``.

    The z2 column is empty for neutral events.  Floats use shortest
    round-trip formatting so the dump is byte-stable for a fixed stream.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "rho", "kind", "z1", "z2"])
        for ev in stream:
            writer.writerow([repr(ev.t), repr(ev.x), repr(ev.rho), ev.kind,
                             repr(ev.z1), "" if ev.z2 is None else repr(ev.z2)])


def event_rate_in_window(params: ModelParams, space: tuple[float, float]) -> float:
    """Expected events per unit time whose interval meets ``space``."""
    a, b = space
    density = params.n * params.sqrt_n
    return sum(density * w * (b - a + 2.0 * r / params.sqrt_n)
               for r, w in zip(params.mu.radii, params.mu.weights))
