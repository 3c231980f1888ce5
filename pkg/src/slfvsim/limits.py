"""Reference implementations of the scaling-limit objects.

Provides the sticky left-right diffusion pair (Euler scheme with midpoint
absorption and a deterministic separation attempt), finite systems of
coalescing oriented Brownian paths, the inverse-Gaussian first-meeting law
for pairs approaching with positive drift, its zero-drift companion, and
Kolmogorov-Smirnov test utilities.

The high-n prelimit simulator (``slfvsim.pair``) is the authoritative
reference wherever the Euler discretization of the sticky rule could be
doubted; the tests compare the two directly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ParameterError
from .pathspace import GridPath

LEFT = "left"
RIGHT = "right"

DEFAULT_DT = 1e-4


@dataclass(frozen=True)
class LRConfig:
    """Sticky pair configuration: drifts ±zeta, variance xi2, grid step dt.

    When zeta > 0 the step must resolve the coalescence timescale:
    dt <= 1e-3 * zeta**2 / xi2.
    """

    zeta: float
    xi2: float
    dt: float = DEFAULT_DT

    def __post_init__(self) -> None:
        if not (math.isfinite(self.zeta) and self.zeta >= 0.0):
            raise ParameterError(f"zeta must be finite and >= 0, got {self.zeta}")
        if not (math.isfinite(self.xi2) and self.xi2 > 0.0):
            raise ParameterError(f"xi2 must be finite and positive, got {self.xi2}")
        if not self.dt > 0.0:
            raise ParameterError("dt must be positive")
        if self.zeta > 0.0:
            bound = 1e-3 * self.zeta ** 2 / self.xi2
            if self.dt > bound:
                raise ParameterError(
                    f"dt = {self.dt} too coarse: must be <= {bound:.3g} "
                    "(1e-3 of the coalescence timescale zeta^2/xi2)"
                )


def _grid(T: float, dt: float) -> tuple[int, float]:
    """Number of steps and effective step so the grid ends exactly at T."""
    if T <= 0.0:
        raise ParameterError("need T > 0")
    steps = max(1, math.ceil(T / dt))
    return steps, T / steps


def simulate_lr_pair(
    L0: float,
    R0: float,
    T: float,
    cfg: LRConfig,
    rng: np.random.Generator,
) -> tuple[GridPath, GridPath]:
    """Euler scheme for the sticky left-right pair on [0, T].

    While separated the components get independent Gaussian increments with
    drifts -zeta (L) and +zeta (R); a step that would produce L >= R absorbs
    both at the midpoint.  While coalesced both components share one Gaussian
    increment and attempt to separate by -+zeta*dt, separating only when the
    attempted gap is positive.  The output satisfies L <= R at every grid
    time.
    """
    if L0 > R0:
        raise ParameterError("need L0 <= R0")
    steps, dt = _grid(T, cfg.dt)
    sd = math.sqrt(cfg.xi2 * dt)
    drift = cfg.zeta * dt
    L = float(L0)
    R = float(R0)
    Ls = [L]
    Rs = [R]
    for _ in range(steps):
        if L < R:
            La = L - drift + sd * rng.standard_normal()
            Ra = R + drift + sd * rng.standard_normal()
            if La >= Ra:
                mid = 0.5 * (La + Ra)
                La = Ra = mid
            L, R = La, Ra
        else:
            base = sd * rng.standard_normal()
            if 2.0 * drift > 0.0:
                L = L + base - drift
                R = R + base + drift
            else:
                L = R = L + base
        Ls.append(L)
        Rs.append(R)
    return (GridPath.from_uniform(0.0, dt, Ls),
            GridPath.from_uniform(0.0, dt, Rs))


def lr_pair_endpoints(
    L0: float,
    R0: float,
    T: float,
    cfg: LRConfig,
    rng: np.random.Generator,
    replicates: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized terminal values (L_T, R_T) over many replicates."""
    if L0 > R0:
        raise ParameterError("need L0 <= R0")
    steps, dt = _grid(T, cfg.dt)
    sd = math.sqrt(cfg.xi2 * dt)
    drift = cfg.zeta * dt
    L = np.full(replicates, float(L0))
    R = np.full(replicates, float(R0))
    for _ in range(steps):
        sep = L < R
        gl = rng.standard_normal(replicates)
        gr = rng.standard_normal(replicates)
        # separated components: independent drivers and opposite drifts
        La = np.where(sep, L - drift + sd * gl, 0.0)
        Ra = np.where(sep, R + drift + sd * gr, 0.0)
        crossed = sep & (La >= Ra)
        mid = 0.5 * (La + Ra)
        La = np.where(crossed, mid, La)
        Ra = np.where(crossed, mid, Ra)
        # coalesced components: one shared driver and a separation attempt
        base = sd * gl
        Lc = L + base - drift
        Rc = R + base + drift
        if drift <= 0.0:
            Lc = L + base
            Rc = R + base
        L = np.where(sep, La, Lc)
        R = np.where(sep, Ra, Rc)
    return L, R


def sticky_fraction(L: GridPath, R: GridPath) -> float:
    """Fraction of grid times at which the two paths coincide."""
    if L.times != R.times:
        raise ParameterError("paths must share one grid")
    hits = sum(1 for a, b in zip(L.values, R.values) if a == b)
    return hits / len(L.values)


# ---------------------------------------------------------------------------
# finite coalescing systems
# ---------------------------------------------------------------------------

def simulate_coalescing_system(
    points,
    orientations,
    T: float,
    cfg: LRConfig,
    rng: np.random.Generator,
) -> list[GridPath]:
    """Finite system of drifted coalescing paths started at time 0.

    Left-oriented paths drift by -zeta, right-oriented by +zeta.  Paths of
    equal orientation evolve independently until they meet and are identical
    afterwards (absorbed at the midpoint of the crossing step).  A single
    mixed pair follows the sticky left-right scheme from its first meeting.
    Mixed systems beyond one left and one right path are not supported.
    """
    pts = [float(p) for p in points]
    orients = list(orientations)
    if len(pts) != len(orients) or not pts:
        raise ParameterError("need matching, non-empty points/orientations")
    for o in orients:
        if o not in (LEFT, RIGHT):
            raise ParameterError(f"unknown orientation {o!r}")
    n_left = sum(1 for o in orients if o == LEFT)
    n_right = len(orients) - n_left
    mixed = n_left > 0 and n_right > 0
    if mixed and len(pts) != 2:
        raise ParameterError(
            "mixed systems beyond a single left/right pair are not supported"
        )
    steps, dt = _grid(T, cfg.dt)

    if mixed:
        i_l = orients.index(LEFT)
        i_r = orients.index(RIGHT)
        x_l, x_r = pts[i_l], pts[i_r]
        sd = math.sqrt(cfg.xi2 * dt)
        drift = cfg.zeta * dt
        met = x_l == x_r
        rows = [[x_l], [x_r]]
        for _ in range(steps):
            if not met:
                nl = x_l - drift + sd * rng.standard_normal()
                nr = x_r + drift + sd * rng.standard_normal()
                if (nl - nr) == 0.0 or (nl - nr) * (x_l - x_r) < 0.0:
                    met = True
                    nl = nr = 0.5 * (nl + nr)
                x_l, x_r = nl, nr
            else:
                # sticky left-right pair with L = left-oriented component
                if x_l < x_r:
                    nl = x_l - drift + sd * rng.standard_normal()
                    nr = x_r + drift + sd * rng.standard_normal()
                    if nl >= nr:
                        nl = nr = 0.5 * (nl + nr)
                else:
                    base = sd * rng.standard_normal()
                    if drift > 0.0:
                        nl = x_l + base - drift
                        nr = x_r + base + drift
                    else:
                        nl = nr = x_l + base
                x_l, x_r = nl, nr
            rows[0].append(x_l)
            rows[1].append(x_r)
        out = [None, None]
        out[i_l] = GridPath.from_uniform(0.0, dt, rows[0])
        out[i_r] = GridPath.from_uniform(0.0, dt, rows[1])
        return out

    # single orientation: clusters of coalesced paths share one driver
    drift = (cfg.zeta if orients[0] == RIGHT else -cfg.zeta) * dt
    sd = math.sqrt(cfg.xi2 * dt)
    cluster = list(range(len(pts)))     # path -> cluster id
    cpos = {i: p for i, p in enumerate(pts)}
    rows = [[p] for p in pts]
    for _ in range(steps):
        live = sorted(set(cluster), key=lambda cid: cpos[cid])
        incr = {cid: drift + sd * rng.standard_normal() for cid in live}
        new = {cid: cpos[cid] + incr[cid] for cid in live}
        # absorb any cluster that meets or overtakes its east neighbour
        merged = True
        while merged:
            merged = False
            live = sorted(set(cluster), key=lambda cid: cpos[cid])
            for a, b in zip(live, live[1:]):
                if new[a] >= new[b]:
                    mid = 0.5 * (new[a] + new[b])
                    for i, cid in enumerate(cluster):
                        if cid == b:
                            cluster[i] = a
                    new[a] = mid
                    cpos[a] = mid
                    del new[b], cpos[b]
                    merged = True
                    break
        for cid in new:
            cpos[cid] = new[cid]
        for i in range(len(pts)):
            rows[i].append(cpos[cluster[i]])
    return [GridPath.from_uniform(0.0, dt, row) for row in rows]


def first_meeting_time(a: GridPath, b: GridPath) -> float | None:
    """First grid time at which the two paths coincide (None if never)."""
    if a.times != b.times:
        raise ParameterError("paths must share one grid")
    for t, u, v in zip(a.times, a.values, b.values):
        if u == v:
            return t
    return None


# ---------------------------------------------------------------------------
# first-meeting laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FirstPassageOracle:
    """Inverse-Gaussian law of a Brownian gap's first hit of zero.

    The gap starts at ``gap0``, shrinks with the given positive drift, and
    fluctuates with the given variance rate.
    """

    gap0: float
    drift: float
    variance: float

    def __post_init__(self) -> None:
        if self.gap0 <= 0.0:
            raise ParameterError("initial gap must be positive")
        if self.drift <= 0.0:
            raise ParameterError(
                "approach drift must be positive; the zero-drift law has "
                "no finite mean (use driftless_meeting_cdf)"
            )
        if self.variance <= 0.0:
            raise ParameterError("gap variance must be positive")

    @property
    def mean(self) -> float:
        return self.gap0 / self.drift

    @property
    def _frozen(self):
        shape = self.gap0 ** 2 / self.variance
        return stats.invgauss(mu=self.mean / shape, scale=shape)

    def cdf(self, t):
        return self._frozen.cdf(t)

    def ppf(self, q):
        return self._frozen.ppf(q)


def first_passage_oracle(gap0: float, drift: float,
                         variance: float) -> FirstPassageOracle:
    """Inverse-Gaussian meeting-time oracle; requires positive drift."""
    return FirstPassageOracle(gap0, drift, variance)


def driftless_meeting_cdf(gap0: float, variance: float):
    """CDF of the first zero of a driftless Brownian gap (heavy-tailed).

    Companion to :func:`first_passage_oracle` for equal-drift pairs, where
    the gap is a driftless Brownian motion with the given variance rate.
    """
    if gap0 <= 0.0 or variance <= 0.0:
        raise ParameterError("need positive gap and variance")

    def cdf(t):
        arr = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros_like(arr)
        pos = arr > 0.0
        out[pos] = 2.0 * stats.norm.sf(gap0 / np.sqrt(variance * arr[pos]))
        if np.asarray(t).ndim == 0:
            return float(out[0])
        return out

    return cdf


# ---------------------------------------------------------------------------
# statistical utilities
# ---------------------------------------------------------------------------

def ks_two_sample(a, b) -> tuple[float, float]:
    """Kolmogorov-Smirnov test of a sample against a sample or a CDF.

    ``b`` may be a second sample or a callable CDF.  Sample sizes below 20
    are refused (the asymptotic p-value is unreliable there).
    """
    a = np.asarray(a, dtype=float)
    if a.size < 20:
        raise ParameterError("need at least 20 observations per sample")
    if callable(b):
        res = stats.kstest(a, b)
        return float(res.statistic), float(res.pvalue)
    b = np.asarray(b, dtype=float)
    if b.size < 20:
        raise ParameterError("need at least 20 observations per sample")
    res = stats.ks_2samp(a, b)
    return float(res.statistic), float(res.pvalue)


def dump_sample_csv(values, path, column: str = "value") -> None:
    """Write one sample value per row under the given column name."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([column])
        for v in values:
            writer.writerow([repr(float(v))])
