"""Built-in example systems: bouncing ball, rocking block, bouncing rod, hopper.

All models are conservative mechanical systems with lossless collisions,
normalized by total mass, characteristic length and gravity.  Each entry ships
an analytic point on the solution set of the time-based map (constructed from
an equilibrium or a zero-duration cycle), seed directions that select the
branches emanating from it, and closed-form oracles used by the test suite.

Model functions are written in nopython-compatible style so the same closures
serve both kernel lanes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import HybridSystem, PhaseSpec
from .shooting import ContinuationVector

__all__ = ["ZooEntry", "ball", "block", "rod", "slip", "REGISTRY", "get_model"]


@dataclass(frozen=True, eq=False)
class ZooEntry:
    """A built-in system plus its analytic starting data.

    ``tangent_seeds`` are coarse directions in the flat unknown space, used
    only to select and orient the branch tangents computed at the (singular)
    initial point; they are not tangents themselves.
    """

    name: str
    system: HybridSystem
    initial_point: ContinuationVector
    tangent_seeds: tuple = ()
    oracles: dict = field(default_factory=dict)

    def initial_tangents(self) -> list[tuple[str, np.ndarray]]:
        """Branch tangents at the initial point, one per seed.

        Computed by quadratic branching analysis when the initial point is a
        simple bifurcation, otherwise by projecting the seed onto the kernel
        of the residual Jacobian.
        """
        from . import continuation as cont
        from .shooting import jacobian_time_based

        sys = self.system
        u0 = self.initial_point
        J = jacobian_time_based(sys, u0)
        try:
            directions = cont.singular_directions(sys, u0, J)
        except Exception:
            directions = []
        out = []
        for name, seed in self.tangent_seeds:
            if directions:
                scores = [abs(float(seed @ d)) for d in directions]
                best = int(np.argmax(scores))
                if scores[best] > 1e-8:
                    d = directions[best]
                    if float(seed @ d) < 0.0:
                        d = -d
                    out.append((name, d))
                    continue
            out.append((name, cont.matched_tangent(J, seed)))
        return out


def _seed(sys: HybridSystem, entries: dict) -> np.ndarray:
    """Build a flat seed vector from {"t_1": v, "x_2_0": v, "xi": v, ...} keys."""
    from .shooting import layout

    lay = layout(sys)
    u = np.zeros(lay.ncols)
    for key, val in entries.items():
        parts = key.split("_")
        if key == "xi":
            u[lay.xi_col] = val
        elif key == "level":
            u[lay.level_col] = val
        elif parts[0] == "t":
            u[lay.t_cols[int(parts[1]) - 1]] = val
        elif parts[0] == "x":
            seg, comp = int(parts[1]), int(parts[2])
            u[lay.x_cols[seg - 1] + comp] = val
        else:
            raise KeyError(key)
    return u


def ball(m_o: float = 1.0, l_o: float = 1.0, g: float = 1.0) -> ZooEntry:
    """Point mass bouncing elastically on the ground; single phase, state [y, dy]."""

    def field(x):
        out = np.empty(2)
        out[0] = x[1]
        out[1] = -g
        return out

    def field_jac(x):
        out = np.zeros((2, 2))
        out[0, 1] = 1.0
        return out

    def event(x):
        return x[0]

    def event_grad(x):
        out = np.zeros(2)
        out[0] = 1.0
        return out

    def reset(x):
        out = np.empty(2)
        out[0] = x[0]
        out[1] = -x[1]
        return out

    def reset_jac(x):
        out = np.zeros((2, 2))
        out[0, 0] = 1.0
        out[1, 1] = -1.0
        return out

    def energy(x):
        return 0.5 * m_o * x[1] * x[1] + m_o * g * x[0]

    def energy_grad(x):
        out = np.empty(2)
        out[0] = m_o * g
        out[1] = m_o * x[1]
        return out

    def energy_hess(x):
        out = np.zeros((2, 2))
        out[1, 1] = m_o
        return out

    def anchor(x):
        return x[1]

    def anchor_grad(x):
        out = np.zeros(2)
        out[1] = 1.0
        return out

    phase = PhaseSpec(
        dim=2,
        field=field,
        field_jacobian=field_jac,
        event=event,
        event_gradient=event_grad,
        reset=reset,
        reset_jacobian=reset_jac,
        first_integral=energy,
        first_integral_gradient=energy_grad,
        first_integral_hessian=energy_hess,
    )
    sys = HybridSystem(
        name="ball",
        phases=(phase,),
        anchor=anchor,
        anchor_gradient=anchor_grad,
        normalization={"mass": m_o, "length": l_o, "gravity": g},
    )
    u0 = ContinuationVector(
        durations=(0.0, 0.0),
        phase_starts=(np.zeros(2), np.zeros(2)),
        xi=0.0,
        level=0.0,
    )
    seeds = (
        ("orbit", _seed(sys, {"t_1": 1.0, "t_2": 1.0})),
        ("dissipation", _seed(sys, {"xi": 1.0})),
    )
    oracles = {
        "period_from_level": lambda H: math.sqrt(8.0 * H / (m_o * g * g)),
        "poincare_map": lambda x: np.array([x[1] ** 2 / (2.0 * g) + x[0], 0.0]),
        "time_to_event": lambda x: (x[1] + math.sqrt(x[1] ** 2 + 2.0 * x[0] * g)) / g,
    }
    return ZooEntry("ball", sys, u0, seeds, oracles)


def block(
    m_o: float = 1.0, l_o: float = 1.0, g: float = 1.0, beta: float = 0.3
) -> ZooEntry:
    """Rocking block pivoting about one corner; single phase, state [alpha, dalpha]."""

    def field(x):
        out = np.empty(2)
        out[0] = x[1]
        out[1] = -(3.0 * g / (4.0 * l_o)) * math.sin(beta - x[0])
        return out

    def field_jac(x):
        out = np.zeros((2, 2))
        out[0, 1] = 1.0
        out[1, 0] = (3.0 * g / (4.0 * l_o)) * math.cos(beta - x[0])
        return out

    def event(x):
        return x[0]

    def event_grad(x):
        out = np.zeros(2)
        out[0] = 1.0
        return out

    def reset(x):
        out = np.empty(2)
        out[0] = x[0]
        out[1] = -x[1]
        return out

    def reset_jac(x):
        out = np.zeros((2, 2))
        out[0, 0] = 1.0
        out[1, 1] = -1.0
        return out

    def energy(x):
        return (2.0 / 3.0) * m_o * l_o * l_o * x[1] * x[1] + (
            math.cos(x[0] - beta) - math.cos(beta)
        ) * m_o * l_o * g

    def energy_grad(x):
        out = np.empty(2)
        out[0] = -math.sin(x[0] - beta) * m_o * l_o * g
        out[1] = (4.0 / 3.0) * m_o * l_o * l_o * x[1]
        return out

    def energy_hess(x):
        out = np.zeros((2, 2))
        out[0, 0] = -math.cos(x[0] - beta) * m_o * l_o * g
        out[1, 1] = (4.0 / 3.0) * m_o * l_o * l_o
        return out

    def anchor(x):
        return x[1]

    def anchor_grad(x):
        out = np.zeros(2)
        out[1] = 1.0
        return out

    phase = PhaseSpec(
        dim=2,
        field=field,
        field_jacobian=field_jac,
        event=event,
        event_gradient=event_grad,
        reset=reset,
        reset_jacobian=reset_jac,
        first_integral=energy,
        first_integral_gradient=energy_grad,
        first_integral_hessian=energy_hess,
    )
    sys = HybridSystem(
        name="block",
        phases=(phase,),
        anchor=anchor,
        anchor_gradient=anchor_grad,
        normalization={"mass": m_o, "length": l_o, "gravity": g},
    )
    u0 = ContinuationVector(
        durations=(0.0, 0.0),
        phase_starts=(np.zeros(2), np.zeros(2)),
        xi=0.0,
        level=0.0,
    )
    seeds = (
        ("orbit", _seed(sys, {"t_1": 1.0, "t_2": 1.0})),
        ("dissipation", _seed(sys, {"xi": 1.0})),
    )
    oracles = {
        "level_max": (1.0 - math.cos(beta)) * m_o * l_o * g,
    }
    return ZooEntry("block", sys, u0, seeds, oracles)


def rod(
    m_o: float = 1.0, l_o: float = 1.0, g: float = 1.0, r: float = 0.01
) -> ZooEntry:
    """Rigid rod bouncing on alternating end points; two phases, state [y, alpha, dy, dalpha]."""

    def field(x):
        out = np.empty(4)
        out[0] = x[2]
        out[1] = x[3]
        out[2] = -g
        out[3] = 0.0
        return out

    def field_jac(x):
        out = np.zeros((4, 4))
        out[0, 2] = 1.0
        out[1, 3] = 1.0
        return out

    def event_left(x):
        return x[0] - 0.5 * l_o * math.sin(x[1])

    def event_left_grad(x):
        out = np.zeros(4)
        out[0] = 1.0
        out[1] = -0.5 * l_o * math.cos(x[1])
        return out

    def event_right(x):
        return x[0] + 0.5 * l_o * math.sin(x[1])

    def event_right_grad(x):
        out = np.zeros(4)
        out[0] = 1.0
        out[1] = 0.5 * l_o * math.cos(x[1])
        return out

    def reset_left(x):
        c = math.cos(x[1])
        den = l_o * l_o * c * c + 4.0 * r * r
        q = 4.0 / den
        v2 = 2.0 * r * r * x[2] - l_o * r * r * c * x[3]
        v3 = 0.5 * l_o * l_o * c * c * x[3] - l_o * c * x[2]
        out = np.empty(4)
        out[0] = x[0]
        out[1] = x[1]
        out[2] = x[2] - q * v2
        out[3] = x[3] - q * v3
        return out

    def reset_left_jac(x):
        c = math.cos(x[1])
        s = math.sin(x[1])
        den = l_o * l_o * c * c + 4.0 * r * r
        q = 4.0 / den
        dq = 8.0 * l_o * l_o * c * s / (den * den)
        v2 = 2.0 * r * r * x[2] - l_o * r * r * c * x[3]
        v3 = 0.5 * l_o * l_o * c * c * x[3] - l_o * c * x[2]
        dv2_da = l_o * r * r * s * x[3]
        dv3_da = -l_o * l_o * c * s * x[3] + l_o * s * x[2]
        out = np.zeros((4, 4))
        out[0, 0] = 1.0
        out[1, 1] = 1.0
        out[2, 1] = -dq * v2 - q * dv2_da
        out[2, 2] = 1.0 - q * 2.0 * r * r
        out[2, 3] = q * l_o * r * r * c
        out[3, 1] = -dq * v3 - q * dv3_da
        out[3, 2] = q * l_o * c
        out[3, 3] = 1.0 - q * 0.5 * l_o * l_o * c * c
        return out

    def reset_right(x):
        c = math.cos(x[1])
        den = l_o * l_o * c * c + 4.0 * r * r
        q = 4.0 / den
        v2 = 2.0 * r * r * x[2] + l_o * r * r * c * x[3]
        v3 = 0.5 * l_o * l_o * c * c * x[3] + l_o * c * x[2]
        out = np.empty(4)
        out[0] = x[0]
        out[1] = x[1]
        out[2] = x[2] - q * v2
        out[3] = x[3] - q * v3
        return out

    def reset_right_jac(x):
        c = math.cos(x[1])
        s = math.sin(x[1])
        den = l_o * l_o * c * c + 4.0 * r * r
        q = 4.0 / den
        dq = 8.0 * l_o * l_o * c * s / (den * den)
        v2 = 2.0 * r * r * x[2] + l_o * r * r * c * x[3]
        v3 = 0.5 * l_o * l_o * c * c * x[3] + l_o * c * x[2]
        dv2_da = -l_o * r * r * s * x[3]
        dv3_da = -l_o * l_o * c * s * x[3] - l_o * s * x[2]
        out = np.zeros((4, 4))
        out[0, 0] = 1.0
        out[1, 1] = 1.0
        out[2, 1] = -dq * v2 - q * dv2_da
        out[2, 2] = 1.0 - q * 2.0 * r * r
        out[2, 3] = -q * l_o * r * r * c
        out[3, 1] = -dq * v3 - q * dv3_da
        out[3, 2] = -q * l_o * c
        out[3, 3] = 1.0 - q * 0.5 * l_o * l_o * c * c
        return out

    def energy(x):
        return 0.5 * m_o * (x[2] * x[2] + r * r * x[3] * x[3]) + m_o * g * x[0]

    def energy_grad(x):
        out = np.empty(4)
        out[0] = m_o * g
        out[1] = 0.0
        out[2] = m_o * x[2]
        out[3] = m_o * r * r * x[3]
        return out

    def energy_hess(x):
        out = np.zeros((4, 4))
        out[2, 2] = m_o
        out[3, 3] = m_o * r * r
        return out

    def anchor(x):
        return x[2]

    def anchor_grad(x):
        out = np.zeros(4)
        out[2] = 1.0
        return out

    phase1 = PhaseSpec(
        dim=4,
        field=field,
        field_jacobian=field_jac,
        event=event_left,
        event_gradient=event_left_grad,
        reset=reset_left,
        reset_jacobian=reset_left_jac,
        first_integral=energy,
        first_integral_gradient=energy_grad,
        first_integral_hessian=energy_hess,
    )
    phase2 = PhaseSpec(
        dim=4,
        field=field,
        field_jacobian=field_jac,
        event=event_right,
        event_gradient=event_right_grad,
        reset=reset_right,
        reset_jacobian=reset_right_jac,
        first_integral=energy,
        first_integral_gradient=energy_grad,
        first_integral_hessian=energy_hess,
    )
    sys = HybridSystem(
        name="rod",
        phases=(phase1, phase2),
        anchor=anchor,
        anchor_gradient=anchor_grad,
        normalization={"mass": m_o, "length": l_o, "gravity": g},
    )
    u0 = ContinuationVector(
        durations=(0.0, 0.0, 0.0),
        phase_starts=(np.zeros(4), np.zeros(4), np.zeros(4)),
        xi=0.0,
        level=0.0,
    )
    seeds = (("symmetric", _seed(sys, {"t_1": 1.0, "t_2": 2.0, "t_3": 1.0})),)
    oracles = {
        "angular_momentum": lambda x: m_o * r * r * x[3],
        "impact_spin": 4.0 * l_o / (l_o * l_o + 4.0 * r * r),
    }
    return ZooEntry("rod", sys, u0, seeds, oracles)


def slip(
    m_o: float = 1.0,
    l_o: float = 1.0,
    g: float = 1.0,
    k: float = 40.0,
    omega_sq: float = 5.0,
) -> ZooEntry:
    """Spring-loaded hopper with swing-leg dynamics; stance [alpha, l, dalpha, dl]
    and flight [y, alpha, dx, dy, dalpha] phases of unequal dimension."""

    def field_s(x):
        out = np.empty(4)
        out[0] = x[2]
        out[1] = x[3]
        out[2] = -2.0 * x[2] * x[3] / x[1] + (g / x[1]) * math.sin(x[0])
        out[3] = x[1] * x[2] * x[2] - g * math.cos(x[0]) - (k / m_o) * (x[1] - l_o)
        return out

    def field_s_jac(x):
        out = np.zeros((4, 4))
        out[0, 2] = 1.0
        out[1, 3] = 1.0
        out[2, 0] = (g / x[1]) * math.cos(x[0])
        out[2, 1] = 2.0 * x[2] * x[3] / (x[1] * x[1]) - (g / (x[1] * x[1])) * math.sin(x[0])
        out[2, 2] = -2.0 * x[3] / x[1]
        out[2, 3] = -2.0 * x[2] / x[1]
        out[3, 0] = g * math.sin(x[0])
        out[3, 1] = x[2] * x[2] - k / m_o
        out[3, 2] = 2.0 * x[1] * x[2]
        return out

    def event_s(x):
        return l_o - x[1]

    def event_s_grad(x):
        out = np.zeros(4)
        out[1] = -1.0
        return out

    def reset_s2f(x):
        c = math.cos(x[0])
        s = math.sin(x[0])
        out = np.empty(5)
        out[0] = x[1] * c
        out[1] = x[0]
        out[2] = -x[3] * s - x[2] * x[1] * c
        out[3] = x[3] * c - x[2] * x[1] * s
        out[4] = x[2]
        return out

    def reset_s2f_jac(x):
        c = math.cos(x[0])
        s = math.sin(x[0])
        out = np.zeros((5, 4))
        out[0, 0] = -x[1] * s
        out[0, 1] = c
        out[1, 0] = 1.0
        out[2, 0] = -x[3] * c + x[2] * x[1] * s
        out[2, 1] = -x[2] * c
        out[2, 2] = -x[1] * c
        out[2, 3] = -s
        out[3, 0] = -x[3] * s - x[2] * x[1] * c
        out[3, 1] = -x[2] * s
        out[3, 2] = -x[1] * s
        out[3, 3] = c
        out[4, 2] = 1.0
        return out

    def energy_s(x):
        return (
            0.5 * m_o * (x[2] * x[2] * x[1] * x[1] + x[3] * x[3])
            + m_o * g * math.cos(x[0]) * x[1]
            + 0.5 * k * (x[1] - l_o) * (x[1] - l_o)
        )

    def energy_s_grad(x):
        out = np.empty(4)
        out[0] = -m_o * g * math.sin(x[0]) * x[1]
        out[1] = m_o * x[2] * x[2] * x[1] + m_o * g * math.cos(x[0]) + k * (x[1] - l_o)
        out[2] = m_o * x[2] * x[1] * x[1]
        out[3] = m_o * x[3]
        return out

    def energy_s_hess(x):
        out = np.zeros((4, 4))
        out[0, 0] = -m_o * g * math.cos(x[0]) * x[1]
        out[0, 1] = -m_o * g * math.sin(x[0])
        out[1, 0] = out[0, 1]
        out[1, 1] = m_o * x[2] * x[2] + k
        out[1, 2] = 2.0 * m_o * x[2] * x[1]
        out[2, 1] = out[1, 2]
        out[2, 2] = m_o * x[1] * x[1]
        out[3, 3] = m_o
        return out

    def field_f(x):
        out = np.empty(5)
        out[0] = x[3]
        out[1] = x[4]
        out[2] = 0.0
        out[3] = -g
        out[4] = -omega_sq * x[1]
        return out

    def field_f_jac(x):
        out = np.zeros((5, 5))
        out[0, 3] = 1.0
        out[1, 4] = 1.0
        out[4, 1] = -omega_sq
        return out

    def event_f(x):
        return x[0] - l_o * math.cos(x[1])

    def event_f_grad(x):
        out = np.zeros(5)
        out[0] = 1.0
        out[1] = l_o * math.sin(x[1])
        return out

    def reset_f2s(x):
        c = math.cos(x[1])
        s = math.sin(x[1])
        out = np.empty(4)
        out[0] = x[1]
        out[1] = l_o
        out[2] = -(c * x[2] + s * x[3]) / l_o
        out[3] = c * x[3] - s * x[2]
        return out

    def reset_f2s_jac(x):
        c = math.cos(x[1])
        s = math.sin(x[1])
        out = np.zeros((4, 5))
        out[0, 1] = 1.0
        out[2, 1] = (s * x[2] - c * x[3]) / l_o
        out[2, 2] = -c / l_o
        out[2, 3] = -s / l_o
        out[3, 1] = -s * x[3] - c * x[2]
        out[3, 2] = -s
        out[3, 3] = c
        return out

    def energy_f(x):
        return 0.5 * m_o * (x[2] * x[2] + x[3] * x[3]) + m_o * g * x[0]

    def energy_f_grad(x):
        out = np.empty(5)
        out[0] = m_o * g
        out[1] = 0.0
        out[2] = m_o * x[2]
        out[3] = m_o * x[3]
        out[4] = 0.0
        return out

    def energy_f_hess(x):
        out = np.zeros((5, 5))
        out[2, 2] = m_o
        out[3, 3] = m_o
        return out

    def anchor(x):
        return -x[3]

    def anchor_grad(x):
        out = np.zeros(4)
        out[3] = -1.0
        return out

    stance = PhaseSpec(
        dim=4,
        field=field_s,
        field_jacobian=field_s_jac,
        event=event_s,
        event_gradient=event_s_grad,
        reset=reset_s2f,
        reset_jacobian=reset_s2f_jac,
        first_integral=energy_s,
        first_integral_gradient=energy_s_grad,
        first_integral_hessian=energy_s_hess,
    )
    flight = PhaseSpec(
        dim=5,
        field=field_f,
        field_jacobian=field_f_jac,
        event=event_f,
        event_gradient=event_f_grad,
        reset=reset_f2s,
        reset_jacobian=reset_f2s_jac,
        first_integral=energy_f,
        first_integral_gradient=energy_f_grad,
        first_integral_hessian=energy_f_hess,
    )
    sys = HybridSystem(
        name="slip",
        phases=(stance, flight),
        anchor=anchor,
        anchor_gradient=anchor_grad,
        normalization={"mass": m_o, "length": l_o, "gravity": g},
        phase_labels=("S", "F"),
    )
    half_period = math.pi * math.sqrt(m_o / k)
    x3 = np.array([0.0, l_o, 0.0, 0.0])
    x2 = np.asarray(reset_s2f(x3), dtype=float)
    x1 = np.array([0.0, l_o - 2.0 * m_o * g / k, 0.0, 0.0])
    u0 = ContinuationVector(
        durations=(half_period, 0.0, half_period),
        phase_starts=(x3, x2, x1),
        xi=0.0,
        level=m_o * g * l_o,
    )
    seeds = (
        ("harmonic", _seed(sys, {"t_1": 1.0, "t_3": -1.0})),
        ("inplace", _seed(sys, {"t_2": 1.0})),
    )
    oracles = {
        "oscillation_period": 2.0 * math.pi * math.sqrt(m_o / k),
        "linear_momentum": lambda x: m_o * x[2],
    }
    return ZooEntry("slip", sys, u0, seeds, oracles)


REGISTRY = {"ball": ball, "block": block, "rod": rod, "slip": slip}


def get_model(name: str, **params) -> ZooEntry:
    """Look up a built-in model by name, with optional parameter overrides."""
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown model '{name}'; available: {sorted(REGISTRY)}") from None
    return factory(**params)
