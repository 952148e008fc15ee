import math
import os

import numpy as np
import pytest

from hoc.errors import DomainError, GrazingError, NoEventError
from hoc.integrate import integrate_fixed, integrate_to_event, integrate_to_section
from hoc.model import HybridSystem, PhaseSpec
from hoc.zoo import ball, get_model

S2 = math.sqrt(2.0)


def test_ball_flight_map(entries):
    sys = entries["ball"].system
    res = integrate_fixed(sys, 1, np.array([0.0, S2]), 0.0, S2)
    assert res.status == "ok"
    assert np.allclose(res.final_state, [1.0, 0.0], atol=1e-9)


def test_zero_duration_is_identity(entries):
    for entry in entries.values():
        sys = entry.system
        x0 = entry.initial_point.start(1)
        res = integrate_fixed(sys, 1, x0, 0.0, 0.0, with_sensitivities=True)
        assert np.array_equal(res.final_state, x0)
        assert np.array_equal(res.phi, np.eye(len(x0)))
        assert np.array_equal(res.psi, np.zeros(len(x0)))


def test_forward_backward_inversion(entries):
    sys = entries["ball"].system
    fwd = integrate_fixed(sys, 1, np.array([1.0, 0.0]), 0.0, S2)
    back = integrate_fixed(sys, 1, fwd.final_state, 0.0, -S2)
    assert np.max(np.abs(back.final_state - [1.0, 0.0])) < 1e-7

    sys2 = entries["block"].system
    fwd = integrate_fixed(sys2, 1, np.array([0.2, 0.1]), 0.05, 1.3)
    back = integrate_fixed(sys2, 1, fwd.final_state, 0.05, -1.3)
    assert np.max(np.abs(back.final_state - [0.2, 0.1])) < 1e-7


def test_event_from_apex(entries):
    sys = entries["ball"].system
    hit, res = integrate_to_event(sys, 1, np.array([1.0, 0.0]), 0.0, 10.0)
    assert abs(hit.time - S2) < 1e-9
    assert np.max(np.abs(hit.state_pre - [0.0, -S2])) < 1e-9
    assert abs(sys.phase(1).event(hit.state_pre)) <= 1e-10 * (
        1.0 + np.linalg.norm(hit.state_pre)
    )
    assert float(hit.event_gradient_pre @ hit.field_pre) < 0.0


def test_event_with_upward_launch(entries):
    sys = entries["ball"].system
    hit, _ = integrate_to_event(sys, 1, np.array([1.0, 1.0]), 0.0, 10.0)
    assert abs(hit.time - (1.0 + math.sqrt(3.0))) < 1e-9
    assert np.max(np.abs(hit.state_pre - [0.0, -math.sqrt(3.0)])) < 1e-9


def test_event_window_too_short(entries):
    sys = entries["ball"].system
    with pytest.raises(NoEventError):
        integrate_to_event(sys, 1, np.array([0.5, -10.0]), 0.0, 0.01)


def test_event_requires_interior_start(entries):
    sys = entries["ball"].system
    with pytest.raises(DomainError):
        integrate_to_event(sys, 1, np.array([0.0, -1.0]), 0.0, 1.0)


def _toy_phase(field, event, event_grad, dim=2):
    def jac(x):
        return np.zeros((dim, dim))

    def reset(x):
        return x.copy()

    def reset_jac(x):
        return np.eye(dim)

    def integral(x):
        return 0.0 * x[0]

    def integral_grad(x):
        return np.zeros(dim)

    return PhaseSpec(
        dim=dim,
        field=field,
        field_jacobian=jac,
        event=event,
        event_gradient=event_grad,
        reset=reset,
        reset_jacobian=reset_jac,
        first_integral=integral,
        first_integral_gradient=integral_grad,
        first_integral_hessian=lambda x: np.zeros((dim, dim)),
    )


def test_tangent_touch_is_rejected():
    # Upward-curving parabola that exactly touches the manifold: from
    # [v^2/2, -v] the minimum of x0 is zero with zero rate.  Depending on
    # roundoff the touch is either missed entirely (no admissible crossing)
    # or located with non-negative rate; a transversal hit must never be
    # reported.
    def field(x):
        out = np.empty(2)
        out[0] = x[1]
        out[1] = 1.0
        return out

    def event(x):
        return x[0]

    def event_grad(x):
        out = np.zeros(2)
        out[0] = 1.0
        return out

    phase = _toy_phase(field, event, event_grad)
    sys = HybridSystem(
        name="graze",
        phases=(phase,),
        anchor=lambda x: x[1],
        anchor_gradient=lambda x: np.array([0.0, 1.0]),
    )
    with pytest.raises((GrazingError, NoEventError)):
        integrate_to_event(sys, 1, np.array([0.5, -1.0]), 0.0, 10.0)


def test_grazing_rate_check_raises():
    # The transversality guard: a located crossing whose declared event
    # gradient gives a non-negative rate (here an inconsistent, author-buggy
    # gradient) must be refused rather than fed to a saltation matrix.
    def field(x):
        out = np.empty(2)
        out[0] = -1.0
        out[1] = 0.0
        return out

    def event(x):
        return x[0]

    def bad_event_grad(x):
        out = np.zeros(2)
        out[0] = -1.0  # wrong sign
        return out

    phase = _toy_phase(field, event, bad_event_grad)
    sys = HybridSystem(
        name="graze2",
        phases=(phase,),
        anchor=lambda x: x[1],
        anchor_gradient=lambda x: np.array([0.0, 1.0]),
    )
    with pytest.raises(GrazingError):
        integrate_to_event(sys, 1, np.array([1.0, 0.0]), 0.0, 10.0)


def test_multiple_roots_in_one_step_takes_first():
    # Trivially smooth base dynamics force huge accepted steps while the
    # event oscillates quickly; the step-halving re-search must still land
    # on the first down-crossing.
    def field(x):
        out = np.empty(2)
        out[0] = 1.0
        out[1] = 0.0
        return out

    def event(x):
        return math.sin(6.0 * math.pi * x[0]) + 0.5

    def event_grad(x):
        out = np.zeros(2)
        out[0] = 6.0 * math.pi * math.cos(6.0 * math.pi * x[0])
        return out

    phase = _toy_phase(field, event, event_grad)
    sys = HybridSystem(
        name="wiggle",
        phases=(phase,),
        anchor=lambda x: x[1],
        anchor_gradient=lambda x: np.array([0.0, 1.0]),
    )
    hit, _ = integrate_to_event(sys, 1, np.array([0.0, 0.0]), 0.0, 10.0)
    # sin(6 pi t) = -1/2 first at 6 pi t = pi + pi/6
    t_expected = (math.pi + math.pi / 6.0) / (6.0 * math.pi)
    assert abs(hit.time - t_expected) < 1e-9


def test_composition_property(entries):
    # Phi(t, x0) = Phi(t - tau, x(tau)) @ Phi(tau, x0)
    rng = np.random.default_rng(12)
    sys = entries["block"].system
    x0 = np.array([0.12, 0.3])
    t = 1.7
    for _ in range(3):
        tau = rng.uniform(0.1, t - 0.1)
        full = integrate_fixed(sys, 1, x0, 0.0, t, with_sensitivities=True)
        part1 = integrate_fixed(sys, 1, x0, 0.0, tau, with_sensitivities=True)
        part2 = integrate_fixed(sys, 1, part1.final_state, 0.0, t - tau, with_sensitivities=True)
        assert np.max(np.abs(full.phi - part2.phi @ part1.phi)) < 1e-6


def test_flow_derivative_transport(entries):
    # Conservative transport: Phi(t) f(x0) = f(x(t)) and dH(x0) = dH(x(t)) Phi(t).
    cases = [("ball", 1, np.array([1.0, 0.3]), 1.1), ("block", 1, np.array([0.15, 0.2]), 1.4),
             ("slip", 1, np.array([0.1, 0.95, 0.2, 0.1]), 0.4)]
    for name, phase, x0, t in cases:
        sys = get_model(name).system
        p = sys.phase(phase)
        res = integrate_fixed(sys, phase, x0, 0.0, t, with_sensitivities=True)
        f0 = np.asarray(p.field(x0))
        ft = np.asarray(p.field(res.final_state))
        assert np.max(np.abs(res.phi @ f0 - ft)) < 1e-6
        dh0 = np.asarray(p.first_integral_gradient(x0))
        dht = np.asarray(p.first_integral_gradient(res.final_state))
        assert np.max(np.abs(dh0 - dht @ res.phi)) < 1e-6


def test_energy_drift_along_flow(entries):
    for name, phase, x0, t in [
        ("ball", 1, np.array([1.0, 0.4]), 1.2),
        ("block", 1, np.array([0.1, 0.25]), 2.0),
        ("slip", 1, np.array([0.05, 0.9, 0.3, 0.2]), 0.8),
    ]:
        sys = get_model(name).system
        p = sys.phase(phase)
        h0 = p.first_integral(x0)
        worst = 0.0
        for frac in np.linspace(0.1, 1.0, 10):
            res = integrate_fixed(sys, phase, x0, 0.0, frac * t)
            worst = max(worst, abs(p.first_integral(res.final_state) - h0))
        assert worst <= 1e-6 * (1.0 + abs(h0))


def test_sensitivities_match_finite_differences(entries):
    for name, phase, x0, xi, t in [
        ("ball", 1, np.array([1.0, 0.2]), 0.03, 1.1),
        ("slip", 1, np.array([0.05, 0.92, 0.1, 0.0]), 0.0, 0.5),
        ("ball", 1, np.array([1.0, 0.2]), 0.0, -0.9),
    ]:
        sys = get_model(name).system
        res = integrate_fixed(sys, phase, x0, xi, t, with_sensitivities=True)
        h = 1e-6
        n = len(x0)
        phi_fd = np.empty((n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            xp = integrate_fixed(sys, phase, x0 + e, xi, t).final_state
            xm = integrate_fixed(sys, phase, x0 - e, xi, t).final_state
            phi_fd[:, j] = (xp - xm) / (2.0 * h)
        psi_fd = (
            integrate_fixed(sys, phase, x0, xi + h, t).final_state
            - integrate_fixed(sys, phase, x0, xi - h, t).final_state
        ) / (2.0 * h)
        scale = 1.0 + np.max(np.abs(phi_fd))
        assert np.max(np.abs(res.phi - phi_fd)) / scale < 1e-4
        assert np.max(np.abs(res.psi - psi_fd)) / (1.0 + np.max(np.abs(psi_fd))) < 1e-4


def test_section_negative_start_rises_then_crosses():
    # Rotation field: the section value starts negative, rises through zero
    # (an up-crossing, which must not count) and is caught on the way down.
    def field(x):
        out = np.empty(2)
        out[0] = x[1]
        out[1] = -x[0]
        return out

    def section(x):
        return x[1]

    def section_grad(x):
        out = np.zeros(2)
        out[1] = 1.0
        return out

    phase = _toy_phase(field, lambda x: x[0] + 10.0, lambda x: np.array([1.0, 0.0]))
    sys = HybridSystem(
        name="rotor", phases=(phase,), anchor=section, anchor_gradient=section_grad
    )
    hit, _ = integrate_to_section(
        sys, 1, np.array([1.0, -0.5]), 0.0, 10.0, section, section_grad
    )
    t_expected = 2.0 * math.pi - math.atan2(0.5, 1.0)
    assert abs(hit.time - t_expected) < 1e-7
    assert float(hit.event_gradient_pre @ hit.field_pre) < 0.0


def test_section_never_reached_raises(entries):
    sys = entries["ball"].system
    # dy starts negative and free fall only decreases it further.
    with pytest.raises(NoEventError):
        integrate_to_section(
            sys, 1, np.array([5.0, -0.1]), 0.0, 0.5, sys.anchor, sys.anchor_gradient
        )


def test_numpy_lane_matches_numba(entries):
    x0 = np.array([1.0, 0.3])
    res_nb = integrate_fixed(entries["ball"].system, 1, x0, 0.0, S2, with_sensitivities=True)
    hit_nb, _ = integrate_to_event(entries["ball"].system, 1, x0, 0.0, 10.0)
    os.environ["HOC_KERNEL"] = "numpy"
    try:
        fresh = ball()  # new PhaseSpec objects pick the numpy lane
        res_np = integrate_fixed(fresh.system, 1, x0, 0.0, S2, with_sensitivities=True)
        hit_np, _ = integrate_to_event(fresh.system, 1, x0, 0.0, 10.0)
    finally:
        del os.environ["HOC_KERNEL"]
    assert np.max(np.abs(res_nb.final_state - res_np.final_state)) < 1e-12
    assert np.max(np.abs(res_nb.phi - res_np.phi)) < 1e-10
    assert abs(hit_nb.time - hit_np.time) < 1e-10
