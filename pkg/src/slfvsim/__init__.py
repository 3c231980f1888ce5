"""Simulation laboratory for a spatial population model with selection.

The package simulates a measure-valued population process driven by a
Poisson field of reproduction events on the real line, together with its
time-reversed branching-coalescing lineage system.  It provides:

* exact event-driven forward and dual simulators (``forward``, ``dual``),
* a two-lineage decomposition used to measure drift and diffusion
  constants of extremal ancestral lineages (``pair``),
* reference diffusions and first-passage oracles for the scaling limit
  (``limits``),
* a metric on right-continuous paths with left limits, extended to
  compactified space-time (``pathspace``),
* a command-line experiment harness (``slfvsim ...``) writing CSV/JSON
  artifacts (``cli``).
"""

from .errors import BudgetError, DiagnosticFailure, ParameterError
from .params import (
    LimitConstants,
    ModelParams,
    RadiusMeasure,
    limit_constants,
    parse_mu,
    per_point_event_rate,
    selection_probability,
)
from .events import (
    NEUTRAL,
    SELECTIVE,
    EventStream,
    ReproductionEvent,
    iter_events_box,
    next_event_hitting,
    sample_events_box,
)
from .pathspace import CadlagPath, GPath, GridPath, compactify, d_M, d_prime_M
from .dual import (
    DualState,
    GenealogyGraph,
    apply_event,
    backward_pair_meeting_times,
    coupled_families,
    detect_crossing,
    extremal_ancestor,
    hop_cross,
    run_dual,
    trace_backward_extremal,
    trace_forward_extremal,
    wedge_diagnostic,
)
from .pair import (
    PairState,
    PairTrajectory,
    estimate_drift_diffusion,
    nearby_occupation,
    run_pair,
)
from .forward import AlleleProfile, duality_check, run_forward
from .limits import (
    FirstPassageOracle,
    LRConfig,
    first_passage_oracle,
    ks_two_sample,
    simulate_coalescing_system,
    simulate_lr_pair,
)

__version__ = "0.1.0"

__all__ = [
    "AlleleProfile",
    "BudgetError",
    "CadlagPath",
    "DiagnosticFailure",
    "DualState",
    "EventStream",
    "FirstPassageOracle",
    "GPath",
    "GenealogyGraph",
    "GridPath",
    "LRConfig",
    "LimitConstants",
    "ModelParams",
    "NEUTRAL",
    "PairState",
    "PairTrajectory",
    "ParameterError",
    "RadiusMeasure",
    "ReproductionEvent",
    "SELECTIVE",
    "apply_event",
    "backward_pair_meeting_times",
    "compactify",
    "coupled_families",
    "d_M",
    "d_prime_M",
    "detect_crossing",
    "duality_check",
    "estimate_drift_diffusion",
    "extremal_ancestor",
    "first_passage_oracle",
    "hop_cross",
    "iter_events_box",
    "ks_two_sample",
    "limit_constants",
    "nearby_occupation",
    "next_event_hitting",
    "parse_mu",
    "per_point_event_rate",
    "run_dual",
    "run_forward",
    "run_pair",
    "sample_events_box",
    "selection_probability",
    "simulate_coalescing_system",
    "simulate_lr_pair",
    "trace_backward_extremal",
    "trace_forward_extremal",
    "wedge_diagnostic",
]
