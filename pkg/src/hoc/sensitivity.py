"""First-order transport of perturbations across events and full cycles.

Pure matrix algebra over immutable inputs: saltation matrices, the
time-to-event gradient, the chained fundamental matrix of a hybrid cycle, and
the Poincaré-map Jacobian obtained by projecting out the flow direction at the
anchor section.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import GrazingError, SingularPointError

__all__ = [
    "TransitionData",
    "saltation",
    "saltation_anchor_event",
    "time_to_event_gradient",
    "hybrid_fundamental",
    "poincare_jacobian",
]

GRAZING_REL_TOL = 1e-12


@dataclass(frozen=True)
class TransitionData:
    """Quantities of one event crossing: fields on both sides, reset Jacobian, event gradient."""

    f_pre: np.ndarray
    f_post: np.ndarray
    reset_jac: np.ndarray
    event_grad: np.ndarray


def _event_rate(td: TransitionData) -> float:
    rate = float(td.event_grad @ td.f_pre)
    scale = float(np.linalg.norm(td.event_grad) * np.linalg.norm(td.f_pre))
    if abs(rate) < GRAZING_REL_TOL * scale or rate >= 0.0:
        raise GrazingError(
            f"event rate {rate:.3e} is not negative-definite relative to scale {scale:.3e}"
        )
    return rate


def saltation(td: TransitionData) -> np.ndarray:
    """Saltation matrix ``D + (f_post - D f_pre) de / (de . f_pre)``."""
    rate = _event_rate(td)
    D = td.reset_jac
    return D + np.outer(td.f_post - D @ td.f_pre, td.event_grad) / rate


def saltation_anchor_event(td: TransitionData) -> np.ndarray:
    """Saltation variant for an anchor placed on the final event manifold.

    Drops the post-event field term: ``D (I - f_pre de / (de . f_pre))``.
    ``f_post`` is ignored.
    """
    rate = _event_rate(td)
    n = td.f_pre.shape[0]
    return td.reset_jac @ (np.eye(n) - np.outer(td.f_pre, td.event_grad) / rate)


def time_to_event_gradient(td: TransitionData, phi_pre: np.ndarray) -> np.ndarray:
    """Gradient of the time-to-event map w.r.t. the phase start state.

    ``phi_pre`` is the phase fundamental matrix evaluated at the event time.
    """
    rate = _event_rate(td)
    return -(td.event_grad @ phi_pre) / rate


def hybrid_fundamental(
    phis: Sequence[np.ndarray], transitions: Sequence[TransitionData]
) -> tuple[list[np.ndarray], np.ndarray]:
    """Chain per-phase fundamental matrices through saltation updates.

    ``phis`` holds one fundamental matrix per traversed segment (length
    ``len(transitions) + 1``); the product composes right-to-left, earliest
    segment first:

    ``Phi = phis[-1] @ S[k] @ phis[k] @ ... @ S[0] @ phis[0]``

    Over a full periodic cycle the product is the monodromy matrix.  Returns
    the list of saltation matrices and the product.
    """
    if len(phis) != len(transitions) + 1:
        raise ValueError("need exactly one more fundamental matrix than transitions")
    saltations = [saltation(td) for td in transitions]
    product = np.asarray(phis[0], dtype=float)
    for S, phi in zip(saltations, phis[1:]):
        product = phi @ (S @ product)
    return saltations, product


def poincare_jacobian(
    phi_total: np.ndarray, f_end: np.ndarray, anchor_grad: np.ndarray
) -> np.ndarray:
    """Poincaré-map Jacobian: flow-direction projector times the cycle fundamental matrix.

    ``dP = (I - f_end da / (da . f_end)) @ phi_total`` with all quantities at
    the anchor return point.
    """
    rate = float(anchor_grad @ f_end)
    scale = float(np.linalg.norm(anchor_grad) * np.linalg.norm(f_end))
    if abs(rate) < GRAZING_REL_TOL * scale:
        raise SingularPointError("anchor is tangent to the flow at the return point")
    n = f_end.shape[0]
    proj = np.eye(n) - np.outer(f_end, anchor_grad) / rate
    return proj @ phi_total
