"""Pseudo-arclength predictor-corrector tracing of solution branches.

Tangents are the oriented unit kernel vectors of the residual Jacobian (the
appended-determinant convention fixes the sign); the predictor is a forward
Euler step ``u + h*d*tau`` and the corrector solves the square bordered system
that pins the update to the hyperplane through the prediction.  Tangent
orientation flips across simple bifurcation points, which is both the
detection signal and, after flipping the direction scalar, the way the trace
continues past them.  Singular points are localized by bisection on the sign
of the bordered determinant and classified by the kernel dimension; branch
directions at simple bifurcations come from the quadratic branching equation
built with second differences of the residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import (
    CorrectorError,
    SingularPointError,
    ToleranceError,
    UnsupportedSingularityError,
)
from .shooting import (
    ContinuationVector,
    evaluate_time_based,
    layout,
    pack,
    unpack,
)

__all__ = [
    "ContinuationSettings",
    "BranchPoint",
    "Branch",
    "tangent",
    "seed_tangent",
    "predict",
    "correct",
    "detect_events",
    "locate_singular",
    "singular_directions",
    "branch_switch",
    "trace",
]

_RANK_TOL = 1e-8  # relative singular-value cutoff for kernel dimension
_HARD_SINGULAR_TOL = 1e-12  # below this the tangent is considered undefined


@dataclass(frozen=True)
class ContinuationSettings:
    h0: float = 1e-2
    h_min: float = 1e-6
    h_max: float = 0.5
    max_steps: int = 100
    direction: int = 1
    newton_tol: float = 1e-9
    newton_step_tol: float = 1e-10
    newton_max_iter: int = 20
    rtol: float = 1e-7
    atol: float = 1e-7
    level_min: Optional[float] = None
    level_max: Optional[float] = None
    arclength_max: Optional[float] = None
    locate_singularities: bool = True
    predictor: str = "tangent"  # "tangent" (Euler along the kernel) or "secant"

    def as_dict(self) -> dict:
        return {
            "h0": self.h0,
            "h_min": self.h_min,
            "h_max": self.h_max,
            "max_steps": self.max_steps,
            "direction": self.direction,
            "newton_tol": self.newton_tol,
            "newton_step_tol": self.newton_step_tol,
            "newton_max_iter": self.newton_max_iter,
            "rtol": self.rtol,
            "atol": self.atol,
            "level_min": self.level_min,
            "level_max": self.level_max,
            "arclength_max": self.arclength_max,
            "locate_singularities": self.locate_singularities,
            "predictor": self.predictor,
        }


@dataclass(frozen=True)
class BranchPoint:
    u: ContinuationVector
    tangent: np.ndarray
    arclength: float
    direction: int
    classification: str  # regular | turning | simple_bifurcation | singular_other
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Branch:
    points: tuple[BranchPoint, ...]
    model: str
    settings: dict
    termination: str

    def __len__(self) -> int:
        return len(self.points)


def _balanced(A: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Two-sided max equilibration ``diag(1/r) A diag(1/c)``.

    Long near-saddle segments make sensitivity blocks exponentially larger
    than the scalar rows, which would otherwise swamp rank, kernel and sign
    computations.  Positive diagonal scalings change neither the kernel (up
    to the recoverable column map) nor any determinant sign.
    Returns ``(A_scaled, row_scale, col_scale)``.
    """
    A = np.asarray(A, dtype=float).copy()
    rs = np.ones(A.shape[0])
    cs = np.ones(A.shape[1])
    for _ in range(3):
        r = np.max(np.abs(A), axis=1)
        r[r == 0.0] = 1.0
        A /= r[:, None]
        rs *= r
        c = np.max(np.abs(A), axis=0)
        c[c == 0.0] = 1.0
        A /= c[None, :]
        cs *= c
    return A, rs, cs


def _bordered_det_sign(dr: np.ndarray, tau: np.ndarray) -> float:
    B = np.vstack([np.asarray(dr, dtype=float), np.asarray(tau, dtype=float)])
    Bs, _, _ = _balanced(B)
    sign, _ = np.linalg.slogdet(Bs)
    return float(sign)


def tangent(dr: np.ndarray) -> np.ndarray:
    """Oriented unit kernel vector of a full-rank N x (N+1) Jacobian.

    The sign is fixed by requiring a positive determinant of the Jacobian with
    the tangent appended as last row.
    """
    A, _, cs = _balanced(dr)
    _, s, vt = np.linalg.svd(A)
    if s[0] == 0.0 or s[-1] < _HARD_SINGULAR_TOL * s[0]:
        raise SingularPointError("Jacobian is rank deficient; tangent undefined")
    tau = vt[-1] / cs
    tau = tau / float(np.linalg.norm(tau))
    sign = _bordered_det_sign(dr, tau)
    if sign == 0.0:
        raise SingularPointError("bordered matrix is singular; tangent undefined")
    if sign < 0.0:
        tau = -tau
    return tau


def kernel_basis(dr: np.ndarray, rank_tol: float = _RANK_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal kernel basis (rows) and equilibrated singular values of ``dr``."""
    A, _, cs = _balanced(dr)
    _, s, vt = np.linalg.svd(A)
    rank = int(np.sum(s > rank_tol * s[0])) if s[0] > 0.0 else 0
    raw = vt[rank:] / cs[None, :]
    if raw.shape[0] == 0:
        return raw, s
    q, _ = np.linalg.qr(raw.T)
    return q.T, s


def seed_tangent(dr: np.ndarray, seed: np.ndarray) -> np.ndarray:
    """Unit projection of a seed direction onto the kernel of ``dr``."""
    K, _ = kernel_basis(dr)
    proj = K.T @ (K @ np.asarray(seed, dtype=float))
    nrm = float(np.linalg.norm(proj))
    if nrm < 1e-10:
        raise SingularPointError("seed direction has no component in the Jacobian kernel")
    return proj / nrm


def matched_tangent(dr: np.ndarray, seed: np.ndarray) -> np.ndarray:
    """Kernel vector whose components match the seed's nonzero entries.

    Solves a least-squares fit of the kernel coordinates to the prescribed
    component pattern (e.g. a duration pattern like ``t_2 = t_1 + t_3``);
    useful at degenerate singular points where a plain projection mixes in
    unwanted kernel directions.
    """
    seed = np.asarray(seed, dtype=float)
    K, _ = kernel_basis(dr)
    if K.shape[0] == 0:
        raise SingularPointError("Jacobian has a trivial kernel")
    mask = seed != 0.0
    if not np.any(mask):
        raise SingularPointError("seed is identically zero")
    A = K[:, mask].T
    c, *_ = np.linalg.lstsq(A, seed[mask], rcond=None)
    v = c @ K
    nrm = float(np.linalg.norm(v))
    if nrm < 1e-10 or not np.all(np.isfinite(v)):
        raise SingularPointError("seed pattern cannot be matched inside the kernel")
    return v / nrm


def predict(u: np.ndarray, tau: np.ndarray, d: int, h: float) -> np.ndarray:
    """Forward Euler predictor ``u + h*d*tau``."""
    return np.asarray(u, dtype=float) + h * float(d) * np.asarray(tau, dtype=float)


def correct(
    sys,
    u_pred: np.ndarray,
    tau: np.ndarray,
    settings: ContinuationSettings = ContinuationSettings(),
):
    """Newton correction of a predicted point onto the solution set.

    Solves the bordered square system ``[r(u); tau.(u - u_pred)] = 0``.
    Returns ``(u_corr, iterations, report, jacobian)`` of the converged point.
    """
    u = np.asarray(u_pred, dtype=float).copy()
    tau = np.asarray(tau, dtype=float)

    def evaluate(uu):
        cv = unpack(sys, uu)
        report, J = evaluate_time_based(
            sys, cv, with_jacobian=True, rtol=settings.rtol, atol=settings.atol
        )
        return cv, report, J

    step_norm = math.inf
    cv, report, J = evaluate(u)
    for it in range(settings.newton_max_iter + 1):
        rnorm = report.norm
        plane = float(tau @ (u - u_pred))
        if rnorm <= settings.newton_tol and (
            step_norm <= settings.newton_step_tol or abs(plane) <= settings.newton_step_tol
        ):
            return cv, it, report, J
        if it == settings.newton_max_iter:
            break
        A = np.vstack([J, tau])
        b = np.empty(A.shape[0])
        b[:-1] = -report.value
        b[-1] = -plane
        # Equilibrated solve: identical solution, far better accuracy for
        # long near-saddle segments.
        As, rs, cs = _balanced(A)
        try:
            delta = np.linalg.solve(As, b / rs) / cs
        except np.linalg.LinAlgError as exc:
            raise CorrectorError(f"bordered system singular: {exc}") from exc
        if not np.all(np.isfinite(delta)):
            raise CorrectorError("non-finite Newton update")

        # Backtracking on the row-equilibrated bordered residual; that norm
        # matches the solve's own scaling, so genuine Newton progress is not
        # rejected on badly conditioned stretches.
        def scaled_norm(rep, uu):
            f = np.concatenate([rep.value, [float(tau @ (uu - u_pred))]])
            return float(np.linalg.norm(f / rs))

        g0 = float(np.linalg.norm(b / rs))
        lam = 1.0
        accepted = None
        for _ in range(7):
            uu = u + lam * delta
            try:
                trial = evaluate(uu)
            except ToleranceError:
                trial = None
            if trial is not None:
                g1 = scaled_norm(trial[1], uu)
                if g1 <= (1.0 - 1e-4 * lam) * g0 or trial[1].norm <= settings.newton_tol:
                    accepted = (uu, trial, lam)
                    break
            lam *= 0.5
        if accepted is None:
            raise CorrectorError(f"damped Newton stalled (residual {rnorm:.3e})")
        u, (cv, report, J), lam = accepted
        step_norm = float(np.linalg.norm(lam * delta))
    raise CorrectorError(
        f"no convergence in {settings.newton_max_iter} iterations (residual {rnorm:.3e})"
    )


def detect_events(prev: BranchPoint, nxt: BranchPoint) -> str:
    """Classify the step between two corrected points.

    Orientation flip of the det-rule tangents marks a crossed simple
    bifurcation; a sign change of the level component of the walking tangent
    marks a turning point.  Returns ``"sb"``, ``"turning"`` or ``"regular"``.
    """
    dot = float(prev.tangent @ nxt.tangent)
    if dot < 0.0:
        return "sb"
    wp = prev.direction * prev.tangent[-1]
    wn = nxt.direction * nxt.tangent[-1]
    if wp * wn < 0.0:
        return "turning"
    return "regular"


def _point_diagnostics(report, J, iterations: int) -> dict:
    _, s = kernel_basis(J)
    return {
        "residual_norm": report.norm,
        "iterations": iterations,
        "sigma_min_rel": float(s[-1] / s[0]) if s[0] > 0 else 0.0,
    }


def _nullity(J: np.ndarray, rank_tol: float = _RANK_TOL) -> int:
    K, _ = kernel_basis(J, rank_tol)
    return K.shape[0]


def locate_singular(
    sys,
    bracket: tuple[BranchPoint, BranchPoint],
    settings: ContinuationSettings = ContinuationSettings(),
) -> BranchPoint:
    """Bisect a flagged tangent-orientation flip down to the singular point.

    The scalar whose sign is tracked is the determinant of the Jacobian
    bordered with the incoming tangent held fixed.  The returned point is the
    best-corrected candidate, classified ``simple_bifurcation`` when its
    kernel is two-dimensional and ``singular_other`` otherwise.
    """
    a, b = bracket
    tau_ref = a.direction * a.tangent
    ua = pack(sys, a.u)
    ub = pack(sys, b.u)

    def eval_at(frac: float):
        u_pred = ua + frac * (ub - ua)
        cv, it, report, J = correct(sys, u_pred, tau_ref, settings)
        return cv, report, J, it, _bordered_det_sign(J, tau_ref)

    lo, hi = 0.0, 1.0
    _, _, J_lo, _, sign_lo = eval_at(0.0)
    best = None
    best_sigma = math.inf
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        try:
            cv, report, J, it, sign = eval_at(mid)
        except CorrectorError:
            # Narrow from the known-good side and keep going.
            hi = 0.5 * (mid + hi)
            continue
        _, s = kernel_basis(J)
        sigma_rel = float(s[-1] / s[0])
        if sigma_rel < best_sigma:
            best_sigma = sigma_rel
            best = (cv, report, J, it, mid)
        if sign == 0.0 or sigma_rel <= 1e-8:
            break
        if sign == sign_lo:
            lo = mid
        else:
            hi = mid
        if (hi - lo) * float(np.linalg.norm(ub - ua)) < 1e-10 * (1.0 + np.linalg.norm(ua)):
            break
    if best is None:
        raise SingularPointError("bracket lost while localizing the singular point")
    cv, report, J, it, frac = best
    nullity = _nullity(J, rank_tol=1e-6)
    classification = "simple_bifurcation" if nullity == 2 else "singular_other"
    diag = _point_diagnostics(report, J, it)
    diag["bracket_fraction"] = frac
    arclength = a.arclength + frac * float(np.linalg.norm(ub - ua))
    return BranchPoint(
        u=cv,
        tangent=tau_ref.copy(),
        arclength=arclength,
        direction=a.direction,
        classification=classification,
        diagnostics=diag,
    )


def singular_directions(
    sys,
    cv: ContinuationVector,
    J: Optional[np.ndarray] = None,
    fd_scale: float = 1e-4,
    rtol: float = 1e-7,
    atol: float = 1e-7,
) -> list[np.ndarray]:
    """Branch directions at a simple bifurcation via the quadratic branching equation.

    Requires a two-dimensional Jacobian kernel.  The 2x2 coefficient matrix
    ``b_jk = w . D2r[v_j, v_k]`` is formed by central second differences of
    the residual along the kernel basis; its real root directions (at most
    two) are returned as unit vectors.  An empty list means no real roots.
    """
    if J is None:
        _, J = evaluate_time_based(sys, cv, with_jacobian=True, rtol=rtol, atol=atol)
    K, s = kernel_basis(J, rank_tol=1e-6)
    if K.shape[0] != 2:
        raise UnsupportedSingularityError(
            f"kernel dimension is {K.shape[0]}, quadratic branching needs 2"
        )
    v1, v2 = K[0], K[1]
    # Left null vector of the original Jacobian via the balanced one: if
    # w_s is left-null of diag(1/r) A diag(1/c) then w_s/r is left-null of A.
    A, rscale, _ = _balanced(J)
    U, _, _ = np.linalg.svd(A)
    w = U[:, -1] / rscale
    w = w / float(np.linalg.norm(w))

    u0 = pack(sys, cv)
    h = fd_scale * (1.0 + float(np.linalg.norm(u0)))

    def res(u):
        report, _ = evaluate_time_based(sys, unpack(sys, u), rtol=rtol, atol=atol)
        return report.value

    r0 = res(u0)

    def second_diag(v):
        return (res(u0 + h * v) - 2.0 * r0 + res(u0 - h * v)) / (h * h)

    def second_mixed(v, wv):
        return (
            res(u0 + h * v + h * wv)
            - res(u0 + h * v - h * wv)
            - res(u0 - h * v + h * wv)
            + res(u0 - h * v - h * wv)
        ) / (4.0 * h * h)

    b11 = float(w @ second_diag(v1))
    b22 = float(w @ second_diag(v2))
    b12 = float(w @ second_mixed(v1, v2))

    scale = max(abs(b11), abs(b12), abs(b22))
    if scale < 1e-10:
        return []
    b11, b12, b22 = b11 / scale, b12 / scale, b22 / scale
    disc = b12 * b12 - b11 * b22
    if disc < -1e-10:
        return []
    disc = max(disc, 0.0)
    roots: list[tuple[float, float]] = []
    if abs(b11) >= abs(b22) and abs(b11) > 1e-12:
        for sgn in (1.0, -1.0):
            rho = (-b12 + sgn * math.sqrt(disc)) / b11
            roots.append((rho, 1.0))
    elif abs(b22) > 1e-12:
        for sgn in (1.0, -1.0):
            sig = (-b12 + sgn * math.sqrt(disc)) / b22
            roots.append((1.0, sig))
    else:
        # b11 = b22 = 0, b12 != 0: the two axes are the root directions.
        roots = [(1.0, 0.0), (0.0, 1.0)]

    directions = []
    for c1, c2 in roots:
        d = c1 * v1 + c2 * v2
        nrm = float(np.linalg.norm(d))
        if nrm < 1e-12:
            continue
        d = d / nrm
        # Canonical sign: largest-magnitude component positive.
        k = int(np.argmax(np.abs(d)))
        if d[k] < 0.0:
            d = -d
        if all(min(np.linalg.norm(d - e), np.linalg.norm(d + e)) > 1e-8 for e in directions):
            directions.append(d)
    return directions


def branch_switch(
    sys,
    point: BranchPoint,
    settings: ContinuationSettings = ContinuationSettings(),
    probe_scale: float = 1e-3,
) -> list[np.ndarray]:
    """Tangent directions of the branches emanating from a simple bifurcation.

    Each quadratic-branching root is probed a small step away from the
    singular point and re-oriented by the determinant rule of the regular
    tangent there, so the returned directions are consistent with forward
    (``d = +1``) tracing.
    """
    if point.classification not in ("simple_bifurcation", "singular_other"):
        raise UnsupportedSingularityError(
            f"branch switching requires a singular point, got {point.classification}"
        )
    directions = singular_directions(sys, point.u, rtol=settings.rtol, atol=settings.atol)
    u0 = pack(sys, point.u)
    eps = probe_scale * (1.0 + float(np.linalg.norm(u0)))
    oriented = []
    for d in directions:
        try:
            _, _, _, J = correct(sys, u0 + eps * d, d, settings)
            tau = tangent(J)
            oriented.append(tau if float(tau @ d) >= 0.0 else d)
        except (CorrectorError, SingularPointError):
            oriented.append(d)
    return oriented


def _corrected_point(
    sys,
    u_pred: np.ndarray,
    tau_ref: np.ndarray,
    settings: ContinuationSettings,
):
    cv, it, report, J = correct(sys, u_pred, tau_ref, settings)
    return cv, it, report, J


def trace(
    sys,
    start: ContinuationVector,
    start_tangent: Optional[np.ndarray] = None,
    settings: ContinuationSettings = ContinuationSettings(),
) -> Branch:
    """Trace a solution branch from a converged (or correctable) start point.

    The start may be singular (an initial tangent must then be supplied).
    Crossed simple bifurcations are localized and inserted into the branch
    when ``locate_singularities`` is set; tracing continues past them with the
    direction scalar flipped.
    """
    lay = layout(sys)
    u0 = pack(sys, start)

    report0, J0 = evaluate_time_based(
        sys, start, with_jacobian=True, rtol=settings.rtol, atol=settings.atol
    )
    tau0_det: Optional[np.ndarray] = None
    try:
        tau0_det = tangent(J0)
    except SingularPointError:
        pass

    if start_tangent is not None:
        tau0 = np.asarray(start_tangent, dtype=float)
        tau0 = tau0 / float(np.linalg.norm(tau0))
    elif tau0_det is not None:
        tau0 = tau0_det
    else:
        raise SingularPointError("start point is singular; an initial tangent is required")

    if report0.norm > settings.newton_tol:
        try:
            start, _, report0, J0 = _corrected_point(sys, u0, tau0, settings)
            u0 = pack(sys, start)
            try:
                tau0_det = tangent(J0)
            except SingularPointError:
                tau0_det = None
        except CorrectorError:
            # A singular start (bordered system rank-deficient) cannot be
            # corrected; accept it as-is when its residual is merely
            # truncation-limited, e.g. an analytic zero-duration seed.
            if tau0_det is not None or report0.norm > math.sqrt(settings.newton_tol):
                raise

    if tau0_det is None:
        nullity = _nullity(J0, rank_tol=1e-6)
        start_class = "simple_bifurcation" if nullity == 2 else "singular_other"
    else:
        start_class = "regular"
    start_point = BranchPoint(
        u=start,
        tangent=tau0 if tau0_det is None else tau0_det,
        arclength=0.0,
        direction=settings.direction,
        classification=start_class,
        diagnostics=_point_diagnostics(report0, J0, 0),
    )

    points = [start_point]
    termination = "max_steps"
    if settings.max_steps <= 0:
        return Branch(tuple(points), sys.name, settings.as_dict(), "max_steps")

    d = 1 if settings.direction >= 0 else -1
    # Walking direction of the first step uses the (possibly supplied) tangent.
    walking = d * tau0
    u_prev = u0
    u_before = None
    prev_point = start_point
    prev_is_start = True
    h = settings.h0
    accepted = 0
    arclength = 0.0

    while accepted < settings.max_steps:
        # The secant predictor is more robust on badly conditioned stretches
        # (near-homoclinic tails) where the kernel tangent's state components
        # are accuracy-limited; converged points are not.
        step_dir = walking
        if settings.predictor == "secant" and u_before is not None:
            sec = u_prev - u_before
            nrm = float(np.linalg.norm(sec))
            if nrm > 0.0:
                sec = sec / nrm
                if float(sec @ walking) > 0.5:
                    step_dir = sec
        u_pred = u_prev + h * step_dir
        try:
            cv, it, report, J = _corrected_point(sys, u_pred, step_dir, settings)
            tau = tangent(J)
        except (CorrectorError, SingularPointError, ToleranceError):
            if h <= settings.h_min * (1.0 + 1e-12):
                termination = "corrector_failed_at_h_min"
                break
            h = max(settings.h_min, 0.5 * h)
            continue

        step_vec = pack(sys, cv) - u_prev
        step_len = float(np.linalg.norm(step_vec))
        if step_len <= 0.0:
            termination = "stalled"
            break

        flipped = False
        if prev_is_start:
            d_new = 1 if float(tau @ walking) >= 0.0 else -1
        else:
            if float(tau @ prev_point.tangent) < 0.0:
                d_new = -prev_point.direction
                flipped = True
            else:
                d_new = prev_point.direction

        arclength += step_len
        classification = "regular"
        if not prev_is_start and not flipped:
            wp = prev_point.direction * prev_point.tangent[lay.level_col]
            wn = d_new * tau[lay.level_col]
            if wp * wn < 0.0:
                classification = "turning"
        new_point = BranchPoint(
            u=cv,
            tangent=tau,
            arclength=arclength,
            direction=d_new,
            classification=classification,
            diagnostics=_point_diagnostics(report, J, it),
        )

        if flipped and settings.locate_singularities:
            try:
                sb_point = locate_singular(sys, (prev_point, new_point), settings)
                frac = sb_point.diagnostics.get("bracket_fraction", 0.5)
                if frac >= 0.999:
                    # Singular point coincides with the freshly accepted point.
                    new_point = replace(
                        new_point,
                        classification=sb_point.classification,
                        diagnostics={**new_point.diagnostics, **sb_point.diagnostics},
                    )
                elif frac <= 0.001 and points:
                    points[-1] = replace(
                        points[-1],
                        classification=sb_point.classification,
                        diagnostics={**points[-1].diagnostics, **sb_point.diagnostics},
                    )
                elif prev_point.arclength < sb_point.arclength < arclength:
                    points.append(sb_point)
            except (CorrectorError, SingularPointError):
                pass

        points.append(new_point)
        accepted += 1
        prev_point = new_point
        prev_is_start = False
        u_before = u_prev
        u_prev = pack(sys, cv)
        walking = d_new * tau

        if settings.level_max is not None and cv.level >= settings.level_max:
            termination = "level_max"
            break
        if settings.level_min is not None and cv.level <= settings.level_min:
            termination = "level_min"
            break
        if settings.arclength_max is not None and arclength >= settings.arclength_max:
            termination = "arclength_max"
            break

        # Corrector effort drives the step size; ill-conditioned stretches
        # converge linearly and legitimately need 5-10 iterations, so only
        # persistent struggle shrinks the step.
        if it <= 3:
            h = min(settings.h_max, 2.0 * h)
        elif it <= 6:
            h = min(settings.h_max, 1.3 * h)
        elif it >= int(0.75 * settings.newton_max_iter):
            h = max(settings.h_min, 0.6 * h)

    return Branch(tuple(points), sys.name, settings.as_dict(), termination)
