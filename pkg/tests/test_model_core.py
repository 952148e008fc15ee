import numpy as np
import pytest

from hoc.errors import DimensionError
from hoc.model import (
    eval_modified_field,
    eval_modified_field_jacobian,
    fd_gradient,
    fd_jacobian,
)

from conftest import event_states, random_states

S2 = np.sqrt(2.0)


def test_modified_field_ball_plain(entries):
    sys = entries["ball"].system
    assert np.allclose(eval_modified_field(sys, 1, [1.0, 0.0], 0.0), [0.0, -1.0])


def test_modified_field_ball_dissipative(entries):
    # dH at [0, 1] is [g, dy] = [1, 1], so f + 0.5*dH = [1.5, -0.5]
    sys = entries["ball"].system
    assert np.allclose(eval_modified_field(sys, 1, [0.0, 1.0], 0.5), [1.5, -0.5])


def test_modified_field_xi_zero_identity(entries):
    rng = np.random.default_rng(3)
    for name, entry in entries.items():
        sys = entry.system
        for phase in range(1, sys.num_phases + 1):
            for x in random_states(name, rng, 5, phase):
                f = np.asarray(sys.phase(phase).field(x))
                assert np.array_equal(eval_modified_field(sys, phase, x, 0.0), f)


def test_modified_field_jacobian_ball(entries):
    sys = entries["ball"].system
    J, dfdxi = eval_modified_field_jacobian(sys, 1, [0.7, -0.3], 0.0)
    assert np.allclose(J, [[0.0, 1.0], [0.0, 0.0]])
    _, dfdxi = eval_modified_field_jacobian(sys, 1, [0.0, 1.0], 0.8)
    assert np.allclose(dfdxi, [1.0, 1.0])


def test_modified_field_jacobian_xi_zero_identity(entries):
    rng = np.random.default_rng(4)
    for name, entry in entries.items():
        sys = entry.system
        for phase in range(1, sys.num_phases + 1):
            x = random_states(name, rng, 1, phase)[0]
            J, _ = eval_modified_field_jacobian(sys, phase, x, 0.0)
            assert np.array_equal(J, np.asarray(sys.phase(phase).field_jacobian(x)))


def test_modified_field_jacobian_fd(entries):
    rng = np.random.default_rng(5)
    for name, entry in entries.items():
        sys = entry.system
        for phase in range(1, sys.num_phases + 1):
            x = random_states(name, rng, 1, phase)[0]
            xi = 0.37
            J, dfdxi = eval_modified_field_jacobian(sys, phase, x, xi)
            Jfd = fd_jacobian(lambda y: eval_modified_field(sys, phase, y, xi), x)
            scale = 1.0 + np.max(np.abs(Jfd))
            assert np.max(np.abs(J - Jfd)) / scale < 1e-5


def test_dimension_mismatch_raises(entries):
    sys = entries["ball"].system
    with pytest.raises(DimensionError):
        eval_modified_field(sys, 1, [1.0, 0.0, 0.0], 0.0)
    with pytest.raises(DimensionError):
        eval_modified_field_jacobian(sys, 1, [1.0], 0.0)


def test_analytic_derivatives_match_fd(entries):
    rng = np.random.default_rng(6)
    for name, entry in entries.items():
        sys = entry.system
        for phase_idx in range(1, sys.num_phases + 1):
            p = sys.phase(phase_idx)
            for x in random_states(name, rng, 4, phase_idx):
                scale = 1.0 + float(np.max(np.abs(x)))
                checks = [
                    (fd_jacobian(p.field, x), p.field_jacobian(x)),
                    (fd_gradient(p.event, x), p.event_gradient(x)),
                    (fd_jacobian(p.reset, x), p.reset_jacobian(x)),
                    (fd_gradient(p.first_integral, x), p.first_integral_gradient(x)),
                    (fd_jacobian(p.first_integral_gradient, x), p.first_integral_hessian(x)),
                ]
                for fd, analytic in checks:
                    assert np.max(np.abs(np.asarray(analytic) - fd)) / scale < 1e-5


def test_orthogonality_of_first_integral(entries):
    rng = np.random.default_rng(7)
    for name, entry in entries.items():
        sys = entry.system
        for phase_idx in range(1, sys.num_phases + 1):
            p = sys.phase(phase_idx)
            for x in random_states(name, rng, 100, phase_idx):
                f = np.asarray(p.field(x))
                dh = np.asarray(p.first_integral_gradient(x))
                bound = 1e-10 * (1.0 + np.linalg.norm(f) * np.linalg.norm(dh))
                assert abs(float(dh @ f)) <= bound


def test_dissipation_identity(entries):
    # dH . f_tilde == xi * |dH|^2 (the conservative part drops out exactly)
    rng = np.random.default_rng(8)
    for name, entry in entries.items():
        sys = entry.system
        for phase_idx in range(1, sys.num_phases + 1):
            p = sys.phase(phase_idx)
            for x in random_states(name, rng, 10, phase_idx):
                xi = rng.uniform(-0.5, 0.5)
                dh = np.asarray(p.first_integral_gradient(x))
                ft = eval_modified_field(sys, phase_idx, x, xi)
                lhs = float(dh @ ft)
                rhs = xi * float(dh @ dh)
                assert abs(lhs - rhs) <= 1e-12 * (1.0 + abs(rhs))


def test_reset_maps_into_next_phase_dimension(entries):
    rng = np.random.default_rng(9)
    for name, entry in entries.items():
        sys = entry.system
        m = sys.num_phases
        for i in range(1, m + 1):
            x = event_states(name, rng, 1, i)[0]
            out = np.asarray(sys.phase(i).reset(x))
            assert out.shape == (sys.phase(i + 1).dim,)


def test_first_integral_transport_df2(entries):
    rng = np.random.default_rng(10)
    for name, entry in entries.items():
        sys = entry.system
        for i in range(1, sys.num_phases + 1):
            p, pn = sys.phase(i), sys.phase(i + 1)
            for x in event_states(name, rng, 20, i):
                h_pre = p.first_integral(x)
                h_post = pn.first_integral(np.asarray(p.reset(x)))
                assert abs(h_post - h_pre) <= 1e-10 * (1.0 + abs(h_pre))


def test_event_gradient_nonzero_on_manifold(entries):
    rng = np.random.default_rng(11)
    for name, entry in entries.items():
        sys = entry.system
        for i in range(1, sys.num_phases + 1):
            p = sys.phase(i)
            for x in event_states(name, rng, 10, i):
                assert abs(p.event(x)) < 1e-12
                assert np.linalg.norm(p.event_gradient(x)) > 1e-8
