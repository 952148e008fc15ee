"""Model contract for conservative hybrid dynamical systems.

A system is a fixed cyclic sequence of phases.  Each phase supplies its vector
field, the event that ends it, the reset into the next phase, and a phase
first integral, together with analytic derivatives of all of these.  Phase
indices are 1-based everywhere in the public interface; index ``m+1`` wraps
back to phase 1 (the returning phase).

Derivative conventions: gradients of scalar maps (event, first integral,
anchor) are 1-D row vectors; Jacobians are 2-D with shape
``(output_dim, input_dim)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError

__all__ = [
    "PhaseSpec",
    "HybridSystem",
    "eval_modified_field",
    "eval_modified_field_jacobian",
    "fd_jacobian",
    "fd_gradient",
    "fd_step",
]

Array = np.ndarray
StateFn = Callable[[Array], Array]
ScalarFn = Callable[[Array], float]


@dataclass(frozen=True, eq=False)
class PhaseSpec:
    """One continuous phase of a hybrid system with analytic derivatives.

    ``first_integral_hessian`` is optional; when absent the modified-field
    Jacobian falls back to central finite differences of
    ``first_integral_gradient`` (only relevant for nonzero dissipation).
    """

    dim: int
    field: StateFn
    field_jacobian: Callable[[Array], Array]
    event: ScalarFn
    event_gradient: StateFn
    reset: StateFn
    reset_jacobian: Callable[[Array], Array]
    first_integral: ScalarFn
    first_integral_gradient: StateFn
    first_integral_hessian: Optional[Callable[[Array], Array]] = None

    def check_state(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.shape[0] != self.dim:
            raise DimensionError(
                f"state of length {x.shape if x.ndim != 1 else x.shape[0]} "
                f"does not match phase dimension {self.dim}"
            )
        return np.ascontiguousarray(x)


@dataclass(frozen=True, eq=False)
class HybridSystem:
    """A conservative hybrid dynamical system with anchor section.

    The anchor is a scalar map on phase-1 states whose transversal
    down-crossing closes a cycle; every reset of phase ``i`` must map onto the
    domain of phase ``i+1`` (mod m) and transport the first-integral value.
    """

    name: str
    phases: tuple[PhaseSpec, ...]
    anchor: ScalarFn
    anchor_gradient: StateFn
    normalization: dict = field(
        default_factory=lambda: {"mass": 1.0, "length": 1.0, "gravity": 1.0}
    )
    phase_labels: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.phase_labels:
            object.__setattr__(
                self, "phase_labels", tuple(str(i + 1) for i in range(len(self.phases)))
            )

    @property
    def num_phases(self) -> int:
        return len(self.phases)

    def phase(self, index: int) -> PhaseSpec:
        """Phase by 1-based index; ``m+1`` wraps to phase 1."""
        m = len(self.phases)
        if index < 1:
            raise DimensionError(f"phase index {index} out of range 1..{m + 1}")
        return self.phases[(index - 1) % m]

    def segment_dims(self) -> tuple[int, ...]:
        """State dimensions of the m+1 cycle segments (last one in phase-1 coordinates)."""
        return tuple(p.dim for p in self.phases) + (self.phases[0].dim,)


def fd_step(x: Array, scale: float = 1e-6) -> float:
    return scale * (1.0 + float(np.linalg.norm(x)))


def fd_jacobian(fn: StateFn, x: Array, h: float | None = None) -> Array:
    """Central finite-difference Jacobian of a vector map."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = fd_step(x)
    cols = []
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2.0 * h))
    return np.column_stack(cols)


def fd_gradient(fn: ScalarFn, x: Array, h: float | None = None) -> Array:
    """Central finite-difference gradient (row vector) of a scalar map."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = fd_step(x)
    g = np.empty_like(x)
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (fn(x + e) - fn(x - e)) / (2.0 * h)
    return g


def eval_modified_field(sys: HybridSystem, phase: int, x: Array, xi: float) -> Array:
    """Dissipation-modified vector field ``f_i(x) + xi * dH_i(x)^T``."""
    p = sys.phase(phase)
    x = p.check_state(x)
    f = np.asarray(p.field(x), dtype=float)
    if xi == 0.0:
        return f
    return f + xi * np.asarray(p.first_integral_gradient(x), dtype=float)


def eval_modified_field_jacobian(
    sys: HybridSystem, phase: int, x: Array, xi: float
) -> tuple[Array, Array]:
    """State Jacobian and dissipation column of the modified field.

    Returns ``(J, dfdxi)`` with ``J = df/dx + xi * d(dH^T)/dx`` and
    ``dfdxi = dH(x)^T`` as a 1-D vector.
    """
    p = sys.phase(phase)
    x = p.check_state(x)
    J = np.asarray(p.field_jacobian(x), dtype=float)
    dh = np.asarray(p.first_integral_gradient(x), dtype=float)
    if xi != 0.0:
        if p.first_integral_hessian is not None:
            hess = np.asarray(p.first_integral_hessian(x), dtype=float)
        else:
            hess = fd_jacobian(p.first_integral_gradient, x)
        J = J + xi * hess
    return J, dh
