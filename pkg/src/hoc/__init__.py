"""Continuation of periodic orbits in conservative hybrid dynamical systems.

A hybrid system cycles through a fixed sequence of smooth phases joined by
event-triggered resets that transport a shared first integral.  This package
finds one-parameter families of its periodic orbits with a time-based
multiple-shooting formulation regularized by a dissipation parameter, traced
by a pseudo-arclength predictor-corrector with bifurcation detection and
branch switching.
"""

from .continuation import (
    Branch,
    BranchPoint,
    ContinuationSettings,
    branch_switch,
    correct,
    detect_events,
    locate_singular,
    predict,
    singular_directions,
    tangent,
    trace,
)
from .errors import (
    CorrectorError,
    DimensionError,
    DomainError,
    GrazingError,
    HocError,
    NoEventError,
    SingularPointError,
    ToleranceError,
    UnsupportedSingularityError,
)
from .integrate import (
    EventHit,
    IntegrationResult,
    integrate_fixed,
    integrate_to_event,
    integrate_to_section,
)
from .model import (
    HybridSystem,
    PhaseSpec,
    eval_modified_field,
    eval_modified_field_jacobian,
    fd_gradient,
    fd_jacobian,
)
from .sensitivity import (
    TransitionData,
    hybrid_fundamental,
    poincare_jacobian,
    saltation,
    saltation_anchor_event,
    time_to_event_gradient,
)
from .shooting import (
    ContinuationVector,
    ResidualReport,
    cross_validate,
    jacobian_state_based,
    jacobian_time_based,
    monodromy_time_based,
    residual_state_based,
    residual_time_based,
)
from .zoo import ZooEntry, ball, block, get_model, rod, slip

__version__ = "0.1.0"

__all__ = [
    "Branch",
    "BranchPoint",
    "ContinuationSettings",
    "ContinuationVector",
    "EventHit",
    "HybridSystem",
    "IntegrationResult",
    "PhaseSpec",
    "ResidualReport",
    "TransitionData",
    "ZooEntry",
    "ball",
    "block",
    "branch_switch",
    "correct",
    "cross_validate",
    "detect_events",
    "eval_modified_field",
    "eval_modified_field_jacobian",
    "fd_gradient",
    "fd_jacobian",
    "get_model",
    "hybrid_fundamental",
    "integrate_fixed",
    "integrate_to_event",
    "integrate_to_section",
    "jacobian_state_based",
    "jacobian_time_based",
    "locate_singular",
    "monodromy_time_based",
    "poincare_jacobian",
    "predict",
    "residual_state_based",
    "residual_time_based",
    "rod",
    "saltation",
    "saltation_anchor_event",
    "singular_directions",
    "slip",
    "tangent",
    "time_to_event_gradient",
    "trace",
    # errors
    "HocError",
    "DimensionError",
    "DomainError",
    "NoEventError",
    "GrazingError",
    "ToleranceError",
    "CorrectorError",
    "SingularPointError",
    "UnsupportedSingularityError",
]
