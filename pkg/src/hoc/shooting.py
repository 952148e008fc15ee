"""Residual maps and Jacobians for periodic-orbit search.

Two formulations of the zero problem:

* time-based multiple shooting: phase durations and phase start states are
  independent unknowns, events and the anchor enter as explicit residual
  rows, and the ODE solver always integrates over prescribed durations
  (negative durations run in reverse).
* state-based single shooting: the event-terminated return map is chained
  from the phase-1 start state, with the level-set row appended.

The flat unknown layout is ``u = [t_{m+1}, xbar_{m+1}, ..., t_1, xbar_1, xi,
level]`` (latest segment first); the residual stacks
``[periodicity, anchor, {shooting_i, event_i} for i = m..1, first-integral]``
so that rows and columns align block-diagonally.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, GrazingError, NoEventError, ToleranceError
from .integrate import (
    DEFAULT_ATOL,
    DEFAULT_EVENT_TOL,
    DEFAULT_RTOL,
    IntegrationResult,
    integrate_fixed,
    integrate_to_event,
    integrate_to_section,
)
from .model import HybridSystem, eval_modified_field
from .sensitivity import TransitionData, hybrid_fundamental, poincare_jacobian

__all__ = [
    "ContinuationVector",
    "ResidualReport",
    "MonodromyReport",
    "CrossValidation",
    "Layout",
    "layout",
    "residual_time_based",
    "jacobian_time_based",
    "evaluate_time_based",
    "monodromy_time_based",
    "residual_state_based",
    "jacobian_state_based",
    "cross_validate",
]


@dataclass(frozen=True, eq=False)
class ContinuationVector:
    """Unknowns of the time-based map, stored latest segment first.

    ``durations[0]`` is the returning-segment duration ``t_{m+1}`` and
    ``durations[-1]`` is ``t_1``; ``phase_starts`` follows the same order with
    the returning segment expressed in phase-1 coordinates.  Use the 1-based
    accessors to avoid ordering mistakes.
    """

    durations: tuple[float, ...]
    phase_starts: tuple[np.ndarray, ...]
    xi: float
    level: float

    def segments(self) -> int:
        return len(self.durations)

    def duration(self, i: int) -> float:
        """Duration of cycle segment ``i`` (1-based, ``m+1`` is the returning one)."""
        return self.durations[len(self.durations) - i]

    def start(self, i: int) -> np.ndarray:
        return self.phase_starts[len(self.phase_starts) - i]

    @property
    def period(self) -> float:
        return float(sum(self.durations))


@dataclass(frozen=True)
class ResidualReport:
    """Stacked residual плюс per-block infinity norms."""

    value: np.ndarray
    block_norms: dict

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.value))) if self.value.size else 0.0


@dataclass(frozen=True)
class Layout:
    """Offsets of the flat unknown vector and residual rows for one system."""

    seg_dims: tuple[int, ...]  # ascending: n_1 .. n_m, n_{m+1} = n_1
    t_cols: tuple[int, ...]  # ascending by segment index
    x_cols: tuple[int, ...]
    xi_col: int
    level_col: int
    ncols: int
    rp_row: int
    ra_row: int
    rs_rows: tuple[int, ...]  # ascending by event index 1..m
    re_rows: tuple[int, ...]
    rh_row: int
    nrows: int

    def x_slice(self, i: int) -> slice:
        return slice(self.x_cols[i - 1], self.x_cols[i - 1] + self.seg_dims[i - 1])


@functools.lru_cache(maxsize=None)
def layout(sys: HybridSystem) -> Layout:
    m = sys.num_phases
    seg_dims = sys.segment_dims()
    t_cols = [0] * (m + 1)
    x_cols = [0] * (m + 1)
    pos = 0
    for seg in range(m + 1, 0, -1):
        t_cols[seg - 1] = pos
        pos += 1
        x_cols[seg - 1] = pos
        pos += seg_dims[seg - 1]
    xi_col = pos
    level_col = pos + 1
    ncols = pos + 2

    n1 = seg_dims[0]
    rp_row = 0
    ra_row = n1
    pos = n1 + 1
    rs_rows = [0] * m
    re_rows = [0] * m
    for i in range(m, 0, -1):
        rs_rows[i - 1] = pos
        pos += seg_dims[i]  # dim of phase i+1 (seg_dims is ascending, 0-based)
        re_rows[i - 1] = pos
        pos += 1
    rh_row = pos
    nrows = pos + 1
    assert nrows == sum(seg_dims) + m + 2
    return Layout(
        seg_dims=seg_dims,
        t_cols=tuple(t_cols),
        x_cols=tuple(x_cols),
        xi_col=xi_col,
        level_col=level_col,
        ncols=ncols,
        rp_row=rp_row,
        ra_row=ra_row,
        rs_rows=tuple(rs_rows),
        re_rows=tuple(re_rows),
        rh_row=rh_row,
        nrows=nrows,
    )


def pack(sys: HybridSystem, cv: ContinuationVector) -> np.ndarray:
    lay = layout(sys)
    u = np.empty(lay.ncols)
    for i in range(1, sys.num_phases + 2):
        if cv.start(i).shape[0] != lay.seg_dims[i - 1]:
            raise DimensionError(
                f"segment {i} state has length {cv.start(i).shape[0]}, expected {lay.seg_dims[i - 1]}"
            )
        u[lay.t_cols[i - 1]] = cv.duration(i)
        u[lay.x_slice(i)] = cv.start(i)
    u[lay.xi_col] = cv.xi
    u[lay.level_col] = cv.level
    return u


def unpack(sys: HybridSystem, u: np.ndarray) -> ContinuationVector:
    lay = layout(sys)
    u = np.asarray(u, dtype=float)
    if u.shape != (lay.ncols,):
        raise DimensionError(f"expected flat vector of length {lay.ncols}, got {u.shape}")
    m1 = sys.num_phases + 1
    durations = []
    starts = []
    for seg in range(m1, 0, -1):  # stored latest first
        durations.append(float(u[lay.t_cols[seg - 1]]))
        starts.append(np.array(u[lay.x_slice(seg)]))
    return ContinuationVector(
        durations=tuple(durations),
        phase_starts=tuple(starts),
        xi=float(u[lay.xi_col]),
        level=float(u[lay.level_col]),
    )


def _integrate_segments(
    sys: HybridSystem,
    cv: ContinuationVector,
    with_sensitivities: bool,
    rtol: float,
    atol: float,
) -> list[IntegrationResult]:
    """Integrate the m+1 cycle segments of the time-based map.

    Sensitivities are always co-integrated: the residual is defined through
    the same augmented flows that produce the Jacobian, so the two can never
    drift onto different discretizations (``with_sensitivities`` is kept for
    call-site clarity only).
    """
    del with_sensitivities
    m = sys.num_phases
    results = []
    for i in range(1, m + 2):
        phase_idx = 1 if i == m + 1 else i
        res = integrate_fixed(
            sys,
            phase_idx,
            cv.start(i),
            cv.xi,
            cv.duration(i),
            with_sensitivities=True,
            rtol=rtol,
            atol=atol,
        )
        if res.status != "ok":
            raise ToleranceError(f"segment {i} integration failed ({res.status})")
        results.append(res)
    return results


def evaluate_time_based(
    sys: HybridSystem,
    cv: ContinuationVector,
    with_jacobian: bool = False,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> tuple[ResidualReport, Optional[np.ndarray]]:
    """Residual (and optionally Jacobian) from one shared set of integrations."""
    lay = layout(sys)
    m = sys.num_phases
    segs = _integrate_segments(sys, cv, with_jacobian, rtol, atol)
    ends = [s.final_state for s in segs]

    r = np.empty(lay.nrows)
    end_ret = ends[m]  # returning segment, phase-1 coordinates
    x1 = cv.start(1)
    r[lay.rp_row : lay.rp_row + lay.seg_dims[0]] = end_ret - x1
    r[lay.ra_row] = sys.anchor(end_ret)
    for i in range(1, m + 1):
        p = sys.phase(i)
        rs = np.asarray(p.reset(ends[i - 1]), dtype=float) - cv.start(i + 1)
        r[lay.rs_rows[i - 1] : lay.rs_rows[i - 1] + lay.seg_dims[i]] = rs
        r[lay.re_rows[i - 1]] = p.event(ends[i - 1])
    r[lay.rh_row] = sys.phase(1).first_integral(x1) - cv.level

    norms = {
        "periodicity": float(np.max(np.abs(r[lay.rp_row : lay.rp_row + lay.seg_dims[0]]))),
        "anchor": float(abs(r[lay.ra_row])),
        "first_integral": float(abs(r[lay.rh_row])),
    }
    for i in range(1, m + 1):
        norms[f"shooting_{i}"] = float(
            np.max(np.abs(r[lay.rs_rows[i - 1] : lay.rs_rows[i - 1] + lay.seg_dims[i]]))
        )
        norms[f"event_{i}"] = float(abs(r[lay.re_rows[i - 1]]))
    report = ResidualReport(value=r, block_norms=norms)

    if not with_jacobian:
        return report, None

    J = np.zeros((lay.nrows, lay.ncols))
    n1 = lay.seg_dims[0]

    # Returning segment: periodicity and anchor rows.
    f_end = eval_modified_field(sys, 1, end_ret, cv.xi)
    phi, psi = segs[m].phi, segs[m].psi
    rows = slice(lay.rp_row, lay.rp_row + n1)
    J[rows, lay.t_cols[m]] = f_end
    J[rows, lay.x_slice(m + 1)] = phi
    J[rows, lay.xi_col] = psi
    J[rows, lay.x_slice(1)] -= np.eye(n1)
    da = np.asarray(sys.anchor_gradient(end_ret), dtype=float)
    J[lay.ra_row, lay.t_cols[m]] = da @ f_end
    J[lay.ra_row, lay.x_slice(m + 1)] = da @ phi
    J[lay.ra_row, lay.xi_col] = da @ psi

    # Shooting and event rows for each transition.
    for i in range(1, m + 1):
        p = sys.phase(i)
        end = ends[i - 1]
        f_end = eval_modified_field(sys, i, end, cv.xi)
        phi, psi = segs[i - 1].phi, segs[i - 1].psi
        D = np.asarray(p.reset_jacobian(end), dtype=float)
        de = np.asarray(p.event_gradient(end), dtype=float)
        rows = slice(lay.rs_rows[i - 1], lay.rs_rows[i - 1] + lay.seg_dims[i])
        J[rows, lay.t_cols[i - 1]] = D @ f_end
        J[rows, lay.x_slice(i)] = D @ phi
        J[rows, lay.xi_col] = D @ psi
        J[rows, lay.x_slice(i + 1)] -= np.eye(lay.seg_dims[i])
        J[lay.re_rows[i - 1], lay.t_cols[i - 1]] = de @ f_end
        J[lay.re_rows[i - 1], lay.x_slice(i)] = de @ phi
        J[lay.re_rows[i - 1], lay.xi_col] = de @ psi

    J[lay.rh_row, lay.x_slice(1)] = np.asarray(
        sys.phase(1).first_integral_gradient(x1), dtype=float
    )
    J[lay.rh_row, lay.level_col] = -1.0
    return report, J


def residual_time_based(
    sys: HybridSystem,
    cv: ContinuationVector,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> ResidualReport:
    report, _ = evaluate_time_based(sys, cv, with_jacobian=False, rtol=rtol, atol=atol)
    return report


def jacobian_time_based(
    sys: HybridSystem,
    cv: ContinuationVector,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> np.ndarray:
    _, J = evaluate_time_based(sys, cv, with_jacobian=True, rtol=rtol, atol=atol)
    return J


@dataclass(frozen=True)
class MonodromyReport:
    """Cycle fundamental matrix with transition factors and derived spectra."""

    phi_total: np.ndarray
    saltations: list
    multipliers: np.ndarray
    poincare: np.ndarray
    transitions: list


def monodromy_time_based(
    sys: HybridSystem,
    cv: ContinuationVector,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> MonodromyReport:
    """Monodromy matrix of a (near-)converged time-based solution.

    Chains the segment fundamental matrices through saltation updates built
    from the segment end states; over one period this is the state-based cycle
    derivative even though the data came from fixed-duration integrations.
    """
    m = sys.num_phases
    segs = _integrate_segments(sys, cv, True, rtol, atol)
    phis = [s.phi for s in segs]
    transitions = []
    for i in range(1, m + 1):
        p = sys.phase(i)
        x_pre = segs[i - 1].final_state
        x_post = np.asarray(p.reset(x_pre), dtype=float)
        transitions.append(
            TransitionData(
                f_pre=eval_modified_field(sys, i, x_pre, cv.xi),
                f_post=eval_modified_field(sys, i + 1, x_post, cv.xi),
                reset_jac=np.asarray(p.reset_jacobian(x_pre), dtype=float),
                event_grad=np.asarray(p.event_gradient(x_pre), dtype=float),
            )
        )
    saltations, phi_total = hybrid_fundamental(phis, transitions)
    end_ret = segs[m].final_state
    f_end = eval_modified_field(sys, 1, end_ret, cv.xi)
    da = np.asarray(sys.anchor_gradient(end_ret), dtype=float)
    dP = poincare_jacobian(phi_total, f_end, da)
    multipliers = np.linalg.eigvals(phi_total)
    return MonodromyReport(
        phi_total=phi_total,
        saltations=saltations,
        multipliers=multipliers,
        poincare=dP,
        transitions=transitions,
    )


def _chain_state_based(
    sys: HybridSystem,
    x0: np.ndarray,
    xi: float,
    t_max: float,
    with_sensitivities: bool,
    rtol: float,
    atol: float,
    event_tol: float,
):
    """Event-terminated cycle from a phase-1 state; returns per-leg records.

    Each of the m event legs records (hit, phi, psi, transition); the final
    anchor leg records (hit, phi, psi).  Sensitivities are re-integrated over
    the localized durations when requested.
    """
    m = sys.num_phases
    legs = []
    x = np.asarray(x0, dtype=float)
    for i in range(1, m + 1):
        hit, _ = integrate_to_event(
            sys, i, x, xi, t_max, rtol=rtol, atol=atol, event_tol=event_tol
        )
        phi = psi = None
        if with_sensitivities:
            res = integrate_fixed(
                sys, i, x, xi, hit.time, with_sensitivities=True, rtol=rtol, atol=atol
            )
            phi, psi = res.phi, res.psi
        p = sys.phase(i)
        x_post = np.asarray(p.reset(hit.state_pre), dtype=float)
        td = TransitionData(
            f_pre=hit.field_pre,
            f_post=eval_modified_field(sys, i + 1, x_post, xi),
            reset_jac=np.asarray(p.reset_jacobian(hit.state_pre), dtype=float),
            event_grad=hit.event_gradient_pre,
        )
        legs.append({"hit": hit, "phi": phi, "psi": psi, "transition": td})
        x = x_post
    hit, _ = integrate_to_section(
        sys,
        1,
        x,
        xi,
        t_max,
        sys.anchor,
        sys.anchor_gradient,
        rtol=rtol,
        atol=atol,
        tol=event_tol,
    )
    phi = psi = None
    if with_sensitivities:
        res = integrate_fixed(
            sys, 1, x, xi, hit.time, with_sensitivities=True, rtol=rtol, atol=atol
        )
        phi, psi = res.phi, res.psi
    legs.append({"hit": hit, "phi": phi, "psi": psi, "transition": None})
    return legs


def residual_state_based(
    sys: HybridSystem,
    x0,
    xi: float,
    level: float,
    t_max: float = 1000.0,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    event_tol: float = DEFAULT_EVENT_TOL,
) -> np.ndarray:
    """State-based residual ``[P(x0, xi) - x0, H_1(x0) - level]``."""
    x0 = sys.phase(1).check_state(x0)
    legs = _chain_state_based(sys, x0, xi, t_max, False, rtol, atol, event_tol)
    p_end = legs[-1]["hit"].state_pre
    r = np.empty(x0.shape[0] + 1)
    r[:-1] = p_end - x0
    r[-1] = sys.phase(1).first_integral(x0) - level
    return r


def jacobian_state_based(
    sys: HybridSystem,
    x0,
    xi: float,
    level: float,
    t_max: float = 1000.0,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    event_tol: float = DEFAULT_EVENT_TOL,
) -> np.ndarray:
    """Jacobian of the state-based residual w.r.t. ``[x0, xi, level]``.

    The state block chains segment fundamental matrices through saltation
    updates and projects out the flow direction at the anchor; the dissipation
    column transports the parameter sensitivities the same way.
    """
    x0 = sys.phase(1).check_state(x0)
    n1 = x0.shape[0]
    legs = _chain_state_based(sys, x0, xi, t_max, True, rtol, atol, event_tol)

    from .sensitivity import saltation  # local to keep module surface tidy

    acc = np.eye(n1)  # d xbar_i / d x0 transported through transitions
    vxi = np.zeros(n1)  # d xbar_i / d xi
    for leg in legs[:-1]:
        S = saltation(leg["transition"])
        acc = S @ (leg["phi"] @ acc)
        vxi = S @ (leg["phi"] @ vxi + leg["psi"])
    last = legs[-1]
    hit = last["hit"]
    phi_cycle = last["phi"] @ acc
    psi_cycle = last["phi"] @ vxi + last["psi"]
    f_end = hit.field_pre
    da = hit.event_gradient_pre  # anchor gradient at the return point
    dP = poincare_jacobian(phi_cycle, f_end, da)
    rate = float(da @ f_end)
    proj = np.eye(n1) - np.outer(f_end, da) / rate
    dPdxi = proj @ psi_cycle

    J = np.zeros((n1 + 1, n1 + 2))
    J[:n1, :n1] = dP - np.eye(n1)
    J[:n1, n1] = dPdxi
    J[n1, :n1] = np.asarray(sys.phase(1).first_integral_gradient(x0), dtype=float)
    J[n1, n1 + 1] = -1.0
    return J


@dataclass(frozen=True)
class CrossValidation:
    """Outcome of replaying a time-based solution through the state-based map."""

    feasible: bool
    reason: str
    time_errors: tuple[float, ...]
    state_errors: tuple[float, ...]
    residual_norm: Optional[float]


def cross_validate(
    sys: HybridSystem,
    cv: ContinuationVector,
    tol: float = 1e-6,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> CrossValidation:
    """Check whether a time-based solution is replayed by event-driven integration.

    Reports infeasibility (rather than raising) when a duration is
    non-positive, an event activates in the wrong direction, or the
    event-driven chain fails; otherwise compares event times and pre-event
    states segment by segment.
    """
    m = sys.num_phases
    for i in range(1, m + 2):
        if cv.duration(i) <= 0.0:
            return CrossValidation(False, f"nonpositive duration t_{i}", (), (), None)

    # Wrong-direction activation at the time-based segment ends.
    try:
        segs = _integrate_segments(sys, cv, False, rtol, atol)
    except ToleranceError as exc:
        return CrossValidation(False, f"time-based integration failed: {exc}", (), (), None)
    for i in range(1, m + 1):
        p = sys.phase(i)
        end = segs[i - 1].final_state
        de = np.asarray(p.event_gradient(end), dtype=float)
        f_end = eval_modified_field(sys, i, end, cv.xi)
        if float(de @ f_end) >= 0.0:
            return CrossValidation(False, f"wrong-direction event activation in phase {i}", (), (), None)

    t_max = 3.0 * sum(abs(t) for t in cv.durations) + 10.0
    try:
        legs = _chain_state_based(
            sys, cv.start(1), cv.xi, t_max, False, rtol, atol, DEFAULT_EVENT_TOL
        )
    except (NoEventError, GrazingError, ToleranceError) as exc:
        return CrossValidation(False, f"state-based chain failed: {type(exc).__name__}", (), (), None)

    time_errors = []
    state_errors = []
    for i in range(1, m + 1):
        hit = legs[i - 1]["hit"]
        time_errors.append(abs(hit.time - cv.duration(i)))
        state_errors.append(
            float(np.max(np.abs(hit.state_pre - segs[i - 1].final_state)))
        )
    time_errors.append(abs(legs[-1]["hit"].time - cv.duration(m + 1)))
    state_errors.append(
        float(np.max(np.abs(legs[-1]["hit"].state_pre - segs[m].final_state)))
    )
    p_end = legs[-1]["hit"].state_pre
    residual_norm = float(np.max(np.abs(p_end - cv.start(1))))

    ok = all(e <= tol * max(1.0, cv.period) for e in time_errors) and all(
        e <= tol * (1.0 + float(np.max(np.abs(cv.start(1))))) for e in state_errors
    )
    return CrossValidation(
        feasible=ok,
        reason="ok" if ok else "event time/state mismatch",
        time_errors=tuple(time_errors),
        state_errors=tuple(state_errors),
        residual_norm=residual_norm,
    )
