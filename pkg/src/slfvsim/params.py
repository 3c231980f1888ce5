"""Model parameters, the radius measure, and the limit constants.

The model: a population spread over the real line evolves through reproduction
events drawn from a Poisson point process.  An event has a centre x, a radius r
drawn from a finite atomic measure mu, and replaces a fraction upsilon of the
local population.  A fraction s_n = alpha / sqrt(n) of events are "selective"
(two potential parents, biased against the disfavoured type); the rest are
neutral (one parent).  Under the diffusive rescaling (space by 1/sqrt(n), event
intensity by n^(3/2) in space-time), extremal ancestral lineages converge to
Brownian motions with

    drift     zeta = (2/3) * alpha * sum_i w_i r_i^2
    variance  xi^2

per unit time.  Two candidate diffusion constants are tracked: the value quoted
in the original analysis, (4/9) * m3, and the value implied directly by the
jump law (each hit displaces a lineage by the sum of two independent
Uniform[-r/sqrt(n), r/sqrt(n)] draws at neutral rate 2 n (1 - s_n) m1), which
is (4/3) * m3.  The Monte Carlo arbitration lives in
:func:`slfvsim.pair.estimate_drift_diffusion`.

All coordinates exposed by this package are in rescaled units.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .errors import ParameterError

__all__ = [
    "RadiusMeasure",
    "ModelParams",
    "LimitConstants",
    "limit_constants",
    "selection_probability",
    "per_point_event_rate",
    "parse_config_file",
    "params_from_config",
]


@dataclass(frozen=True)
class RadiusMeasure:
    """Finite atomic radius measure: atoms (r_i, w_i) with r_i > 0, w_i > 0."""

    radii: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.radii) != len(self.weights) or not self.radii:
            raise ParameterError("radius measure needs matching, non-empty atom lists")
        for r, w in zip(self.radii, self.weights):
            if not (math.isfinite(r) and r > 0):
                raise ParameterError(f"atom radius must be finite and positive, got {r}")
            if not (math.isfinite(w) and w > 0):
                raise ParameterError(f"atom weight must be finite and positive, got {w}")

    @classmethod
    def delta(cls, r: float, weight: float = 1.0) -> "RadiusMeasure":
        """Unit-mass point measure at radius r (weight overridable)."""
        return cls((float(r),), (float(weight),))

    @classmethod
    def from_atoms(cls, atoms) -> "RadiusMeasure":
        """Build from an iterable of (weight, radius) pairs."""
        pairs = [(float(w), float(r)) for w, r in atoms]
        return cls(tuple(r for _, r in pairs), tuple(w for w, _ in pairs))

    def moment(self, k: int) -> float:
        """k-th moment sum_i w_i r_i^k (k = 0 gives the total mass)."""
        return float(sum(w * r**k for r, w in zip(self.radii, self.weights)))

    @property
    def total_mass(self) -> float:
        return self.moment(0)

    @property
    def max_radius(self) -> float:
        return max(self.radii)

    def scaled(self, c: float) -> "RadiusMeasure":
        """Measure with every weight multiplied by c > 0."""
        if c <= 0:
            raise ParameterError("weight scale factor must be positive")
        return RadiusMeasure(self.radii, tuple(c * w for w in self.weights))


@dataclass(frozen=True)
class ModelParams:
    """Full parameter set for one simulation.

    n        rescaling level (positive integer; spatial unit is sqrt(n) lattice
             lengths, event intensity n^(3/2) per unit rescaled space-time)
    alpha    selection strength, >= 0
    upsilon  impact fraction per event, in (0, 1]
    mu       radius measure (unrescaled radii)
    seed     base seed for all derived random streams
    """

    n: int
    alpha: float = 0.0
    upsilon: float = 1.0
    mu: RadiusMeasure = field(default_factory=lambda: RadiusMeasure.delta(1.0))
    seed: int = 0

    def __post_init__(self):
        if not (isinstance(self.n, int) and self.n >= 1):
            raise ParameterError(f"n must be a positive integer, got {self.n!r}")
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ParameterError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not (0.0 < self.upsilon <= 1.0):
            raise ParameterError(f"upsilon must lie in (0, 1], got {self.upsilon}")
        sn = self.alpha / math.sqrt(self.n)
        if sn > 1.0:
            raise ParameterError(
                f"selective fraction alpha/sqrt(n) = {sn:.6g} exceeds 1; "
                "raise n or lower alpha")

    @property
    def s_n(self) -> float:
        """Probability that an event is selective."""
        return self.alpha / math.sqrt(self.n)

    @property
    def sqrt_n(self) -> float:
        return math.sqrt(self.n)

    @property
    def rescaled_radii(self) -> tuple[float, ...]:
        """Event half-widths in rescaled space, r_i / sqrt(n)."""
        rn = self.sqrt_n
        return tuple(r / rn for r in self.mu.radii)

    @property
    def max_rescaled_radius(self) -> float:
        return self.mu.max_radius / self.sqrt_n

    def with_(self, **kw) -> "ModelParams":
        data = dict(n=self.n, alpha=self.alpha, upsilon=self.upsilon,
                    mu=self.mu, seed=self.seed)
        data.update(kw)
        return ModelParams(**data)


@dataclass(frozen=True)
class LimitConstants:
    """Scaling-limit constants for extremal lineages.

    zeta          drift of the right-most lineage (left-most gets -zeta)
    xi2_reported  diffusion constant as quoted in the original analysis,
                  (4/9) * m3
    xi2_derived   diffusion constant implied by the jump law, (4/3) * m3;
                  confirmed by the Monte Carlo arbitration before use
    """

    zeta: float
    xi2_reported: float
    xi2_derived: float


def limit_constants(alpha: float, mu: RadiusMeasure) -> LimitConstants:
    """Compute drift and both candidate diffusion constants."""
    if not (math.isfinite(alpha) and alpha >= 0):
        raise ParameterError(f"alpha must be finite and >= 0, got {alpha}")
    m2 = mu.moment(2)
    m3 = mu.moment(3)
    return LimitConstants(
        zeta=(2.0 / 3.0) * alpha * m2,
        xi2_reported=(4.0 / 9.0) * m3,
        xi2_derived=(4.0 / 3.0) * m3,
    )


def selection_probability(alpha: float, n: int) -> float:
    """s_n = alpha / sqrt(n); errors if outside [0, 1]."""
    if not (isinstance(n, int) and n >= 1):
        raise ParameterError(f"n must be a positive integer, got {n!r}")
    if not (math.isfinite(alpha) and alpha >= 0):
        raise ParameterError(f"alpha must be finite and >= 0, got {alpha}")
    sn = alpha / math.sqrt(n)
    if sn > 1.0:
        raise ParameterError(f"alpha/sqrt(n) = {sn:.6g} exceeds 1")
    return sn


def per_point_event_rate(n: int, mu: RadiusMeasure) -> float:
    """Total rate at which events cover one fixed point: 2 * n * m1.

    Each radius atom contributes centre density n^(3/2) * w_i over the covering
    centre interval of length 2 r_i / sqrt(n).  The neutral share is (1 - s_n)
    of the total.
    """
    if not (isinstance(n, int) and n >= 1):
        raise ParameterError(f"n must be a positive integer, got {n!r}")
    return 2.0 * n * mu.moment(1)


# ---------------------------------------------------------------------------
# config files:  "key = value" lines, '#' comments
# ---------------------------------------------------------------------------

_ATOM_RE = re.compile(r"\(\s*([^,()]+)\s*,\s*([^,()]+)\s*\)")


def parse_mu(text: str) -> RadiusMeasure:
    """Parse a radius-measure literal.

    ``delta:R``                  unit mass at radius R
    ``atoms:(w1,r1),(w2,r2)...`` explicit (weight, radius) atoms
    """
    text = text.strip()
    if text.startswith("delta:"):
        return RadiusMeasure.delta(_parse_float(text[len("delta:"):]))
    if text.startswith("atoms:"):
        body = text[len("atoms:"):].strip()
        pairs = _ATOM_RE.findall(body)
        if not pairs or _ATOM_RE.sub("", body).strip(", \t"):
            raise ParameterError(f"cannot parse atom list {body!r}")
        return RadiusMeasure.from_atoms(
            (_parse_float(w), _parse_float(r)) for w, r in pairs)
    raise ParameterError(f"cannot parse radius measure {text!r}")


def _parse_float(s: str) -> float:
    try:
        return float(s.strip())
    except ValueError as exc:
        raise ParameterError(f"bad numeric literal {s!r}") from exc


def parse_config_file(path) -> dict:
    """Read a ``key = value`` config file into a string dict."""
    out: dict[str, str] = {}
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ParameterError(f"cannot read config file {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def params_from_config(config: dict, **overrides) -> ModelParams:
    """Build ModelParams from a parsed config dict plus keyword overrides.

    Recognised keys: n, alpha, upsilon, mu, seed.  Unknown keys are ignored so
    experiment-level settings can share the same file.
    """
    merged = dict(config)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    kw: dict = {}
    if "n" in merged:
        kw["n"] = int(merged["n"])
    if "alpha" in merged:
        kw["alpha"] = float(merged["alpha"])
    if "upsilon" in merged:
        kw["upsilon"] = float(merged["upsilon"])
    if "seed" in merged:
        kw["seed"] = int(merged["seed"])
    if "mu" in merged:
        mu = merged["mu"]
        kw["mu"] = mu if isinstance(mu, RadiusMeasure) else parse_mu(str(mu))
    if "n" not in kw:
        raise ParameterError("config must define n")
    return ModelParams(**kw)
