"""Public integration interface over the RK45 kernels.

Two operations: fixed-duration propagation (negative durations integrate the
negated modified field forward over the absolute duration) and event-localized
propagation that halts at the first transversal down-crossing of the phase's
event function.  Fixed-duration integration can co-integrate the variational
matrices Phi (state sensitivity) and Psi (dissipation sensitivity) along the
same accepted steps.

Each phase is bound to a kernel lane on first use: numba-compiled callables
when the model functions compile in nopython mode (and ``HOC_KERNEL`` does not
force ``numpy``), plain Python otherwise.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import DomainError, GrazingError, NoEventError, ToleranceError
from .model import HybridSystem, PhaseSpec, fd_jacobian

__all__ = [
    "IntegrationResult",
    "EventHit",
    "integrate_fixed",
    "integrate_to_event",
    "integrate_to_section",
    "DEFAULT_RTOL",
    "DEFAULT_ATOL",
    "DEFAULT_EVENT_TOL",
]

DEFAULT_RTOL = 1e-7
DEFAULT_ATOL = 1e-7
DEFAULT_EVENT_TOL = 1e-10
_MAX_STEPS = 5_000_000


@dataclass(frozen=True)
class IntegrationResult:
    """Final state of a fixed-duration run plus optional sensitivities."""

    final_state: np.ndarray
    phi: Optional[np.ndarray]
    psi: Optional[np.ndarray]
    steps: int
    status: str  # "ok" | "tolerance_failure"


@dataclass(frozen=True)
class EventHit:
    """First down-crossing of an event function along a trajectory."""

    time: float
    state_pre: np.ndarray
    field_pre: np.ndarray
    event_gradient_pre: np.ndarray


class _Runtime:
    """Per-phase callables bound to a kernel lane."""

    __slots__ = ("plain", "numba", "numba_var")

    def __init__(self, phase: PhaseSpec):
        hess = phase.first_integral_hessian
        if hess is None:
            grad = phase.first_integral_gradient

            def hess(x, _g=grad):
                return fd_jacobian(_g, x)

        self.plain = {
            "field": phase.field,
            "dh": phase.first_integral_gradient,
            "jac": phase.field_jacobian,
            "hess": hess,
            "event": phase.event,
        }
        self.numba = None
        self.numba_var = False
        if kernels.lane() == "numba":
            try:
                bundle = {
                    "field": kernels.compile_state_fn(phase.field),
                    "dh": kernels.compile_state_fn(phase.first_integral_gradient),
                    "event": kernels.compile_scalar_fn(phase.event),
                }
                bundle["jac"] = kernels.compile_matrix_fn(phase.field_jacobian)
                if phase.first_integral_hessian is not None:
                    bundle["hess"] = kernels.compile_matrix_fn(phase.first_integral_hessian)
                    self.numba_var = True
                self.numba = bundle
            except Exception:
                self.numba = None


@functools.lru_cache(maxsize=None)
def _runtime(phase: PhaseSpec) -> _Runtime:
    return _Runtime(phase)


def _select(phase: PhaseSpec, variational: bool):
    """Return (bundle, kernel_table, is_numba) for the requested integration."""
    rt = _runtime(phase)
    if kernels.lane() == "numba" and rt.numba is not None and (not variational or rt.numba_var):
        return rt.numba, kernels.numba_kernels(), True
    table = {
        "fixed": kernels.rk45_fixed,
        "fixed_var": kernels.rk45_fixed_var,
        "event": kernels.rk45_event,
    }
    return rt.plain, table, False


def integrate_fixed(
    sys: HybridSystem,
    phase: int,
    x0,
    xi: float,
    duration: float,
    with_sensitivities: bool = False,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> IntegrationResult:
    """Flow of the modified field over a signed, fixed duration.

    Negative durations integrate ``-f_tilde`` forward over ``[0, -duration]``.
    With ``with_sensitivities`` the fundamental matrix Phi and the dissipation
    sensitivity Psi solve their matrix ODEs along the same step sequence,
    error-controlled by the base state alone.
    """
    p = sys.phase(phase)
    x0 = p.check_state(x0)
    sgn = 1.0 if duration >= 0.0 else -1.0
    dur = abs(float(duration))
    if with_sensitivities:
        bundle, table, _ = _select(p, True)
        x, phi, psi, status, nsteps = table["fixed_var"](
            bundle["field"],
            bundle["jac"],
            bundle["dh"],
            bundle["hess"],
            x0,
            float(xi),
            sgn,
            dur,
            rtol,
            atol,
            _MAX_STEPS,
        )
        return IntegrationResult(
            final_state=x,
            phi=phi,
            psi=psi,
            steps=int(nsteps),
            status="ok" if status == kernels.STATUS_OK else "tolerance_failure",
        )
    bundle, table, _ = _select(p, False)
    x, status, nsteps = table["fixed"](
        bundle["field"],
        bundle["dh"],
        x0,
        float(xi),
        sgn,
        dur,
        rtol,
        atol,
        _MAX_STEPS,
    )
    return IntegrationResult(
        final_state=x,
        phi=None,
        psi=None,
        steps=int(nsteps),
        status="ok" if status == kernels.STATUS_OK else "tolerance_failure",
    )


def integrate_to_event(
    sys: HybridSystem,
    phase: int,
    x0,
    xi: float,
    t_max: float,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    event_tol: float = DEFAULT_EVENT_TOL,
) -> tuple[EventHit, IntegrationResult]:
    """Integrate forward until the phase's event function first crosses zero.

    The crossing is bracketed on dense output and refined until the event
    value at the returned state is below ``event_tol`` scaled by the state
    norm.  Raises :class:`NoEventError` if no crossing occurs in
    ``[0, t_max]`` and :class:`GrazingError` if the event rate at the crossing
    is non-negative.
    """
    p = sys.phase(phase)
    x0 = p.check_state(x0)
    if not np.isfinite(t_max) or t_max <= 0.0:
        raise DomainError("t_max must be a positive finite number")
    if p.event(x0) <= 0.0:
        raise DomainError("trajectory must start strictly inside the phase domain (event > 0)")

    bundle, table, _ = _select(p, False)
    t_hit, x_pre, status, nsteps = table["event"](
        bundle["field"],
        bundle["dh"],
        bundle["event"],
        x0,
        float(xi),
        float(t_max),
        rtol,
        atol,
        event_tol,
        _MAX_STEPS,
    )
    if status == kernels.STATUS_NO_EVENT:
        raise NoEventError(f"no event crossing in [0, {t_max}]")
    if status == kernels.STATUS_BAD_START:
        raise DomainError("trajectory must start strictly inside the phase domain (event > 0)")
    if status != kernels.STATUS_OK:
        raise ToleranceError("step size underflow while searching for the event")

    f_pre = np.asarray(p.field(x_pre), dtype=float)
    if xi != 0.0:
        f_pre = f_pre + xi * np.asarray(p.first_integral_gradient(x_pre), dtype=float)
    de = np.asarray(p.event_gradient(x_pre), dtype=float)
    if float(de @ f_pre) >= 0.0:
        raise GrazingError("event rate is non-negative at the located crossing")

    hit = EventHit(time=float(t_hit), state_pre=x_pre, field_pre=f_pre, event_gradient_pre=de)
    result = IntegrationResult(
        final_state=x_pre, phi=None, psi=None, steps=int(nsteps), status="ok"
    )
    return hit, result


@functools.lru_cache(maxsize=None)
def _section_runtime(phase: PhaseSpec, section):
    """Compiled positive/negated copies of an arbitrary scalar section map."""
    def make_neg(pos):
        def neg(x):
            return -pos(x)

        return neg

    out = {"pos": section, "neg": make_neg(section), "numba": None}
    if kernels.lane() == "numba":
        rt = _runtime(phase)
        if rt.numba is not None:
            try:
                pos_nb = kernels.compile_scalar_fn(section)
                out["numba"] = {
                    "pos": pos_nb,
                    "neg": kernels.compile_scalar_fn(make_neg(pos_nb)),
                }
            except Exception:
                out["numba"] = None
    return out


def integrate_to_section(
    sys: HybridSystem,
    phase: int,
    x0,
    xi: float,
    t_max: float,
    section,
    section_gradient,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    tol: float = DEFAULT_EVENT_TOL,
) -> tuple[EventHit, IntegrationResult]:
    """Halt at the first transversal down-crossing of an arbitrary scalar section.

    Unlike :func:`integrate_to_event`, a start with a non-positive section
    value is allowed: the trajectory first rises through the section (an
    up-crossing, which does not count) before the down-crossing is sought.
    """
    p = sys.phase(phase)
    x0 = p.check_state(x0)
    if not np.isfinite(t_max) or t_max <= 0.0:
        raise DomainError("t_max must be a positive finite number")
    srt = _section_runtime(p, section)
    rt = _runtime(p)
    use_numba = (
        kernels.lane() == "numba" and rt.numba is not None and srt["numba"] is not None
    )
    if use_numba:
        bundle, table = rt.numba, kernels.numba_kernels()
        sec_pos, sec_neg = srt["numba"]["pos"], srt["numba"]["neg"]
    else:
        bundle = rt.plain
        table = {"event": kernels.rk45_event}
        sec_pos, sec_neg = srt["pos"], srt["neg"]

    t_acc = 0.0
    x = x0
    g0 = float(section(x0))
    if g0 == 0.0:
        raise DomainError("start state lies exactly on the section")
    if g0 < 0.0:
        # Rise through the section first; an up-crossing of g is a
        # down-crossing of -g.
        t_up, x_up, status, _ = table["event"](
            bundle["field"], bundle["dh"], sec_neg, x, float(xi), float(t_max),
            rtol, atol, tol, _MAX_STEPS,
        )
        if status == kernels.STATUS_NO_EVENT:
            raise NoEventError(f"section not reached from below in [0, {t_max}]")
        if status != kernels.STATUS_OK:
            raise ToleranceError("step size underflow while rising to the section")
        # Nudge past the crossing so the remaining search starts with g > 0.
        res = integrate_fixed(sys, phase, x_up, xi, 1e-9 * max(1.0, t_max), rtol=rtol, atol=atol)
        x = res.final_state
        t_acc = t_up + 1e-9 * max(1.0, t_max)
        if float(section(x)) <= 0.0:
            raise GrazingError("section grazed while rising from below")

    t_hit, x_pre, status, nsteps = table["event"](
        bundle["field"], bundle["dh"], sec_pos, x, float(xi), float(t_max - t_acc),
        rtol, atol, tol, _MAX_STEPS,
    )
    if status == kernels.STATUS_NO_EVENT:
        raise NoEventError(f"no section crossing in [0, {t_max}]")
    if status != kernels.STATUS_OK:
        raise ToleranceError("step size underflow while searching for the section")

    f_pre = np.asarray(p.field(x_pre), dtype=float)
    if xi != 0.0:
        f_pre = f_pre + xi * np.asarray(p.first_integral_gradient(x_pre), dtype=float)
    dg = np.asarray(section_gradient(x_pre), dtype=float)
    if float(dg @ f_pre) >= 0.0:
        raise GrazingError("section rate is non-negative at the located crossing")
    hit = EventHit(
        time=float(t_acc + t_hit), state_pre=x_pre, field_pre=f_pre, event_gradient_pre=dg
    )
    result = IntegrationResult(
        final_state=x_pre, phi=None, psi=None, steps=int(nsteps), status="ok"
    )
    return hit, result
