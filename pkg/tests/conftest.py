import numpy as np
import pytest

from hoc import continuation as cont
from hoc import zoo


@pytest.fixture(scope="session")
def entries():
    return {name: zoo.get_model(name) for name in ("ball", "block", "rod", "slip")}


@pytest.fixture(scope="session")
def ball_branch(entries):
    e = entries["ball"]
    tau = dict(e.initial_tangents())["orbit"]
    settings = cont.ContinuationSettings(max_steps=160)
    return cont.trace(e.system, e.initial_point, tau, settings)


@pytest.fixture(scope="session")
def ball_branch_reversed(entries):
    e = entries["ball"]
    tau = dict(e.initial_tangents())["orbit"]
    settings = cont.ContinuationSettings(max_steps=60, direction=-1)
    return cont.trace(e.system, e.initial_point, tau, settings)


@pytest.fixture(scope="session")
def block_branch(entries):
    # Moderate window: the far tail needs the dedicated two-stage recipe.
    # Tight ODE tolerance keeps the computed family's dissipation parameter
    # at the level the theory demands.
    e = entries["block"]
    tau = dict(e.initial_tangents())["orbit"]
    settings = cont.ContinuationSettings(max_steps=100, arclength_max=8.0, rtol=1e-9, atol=1e-9)
    return cont.trace(e.system, e.initial_point, tau, settings)


@pytest.fixture(scope="session")
def block_asymptote(entries):
    """Two-stage near-homoclinic run: default stage, then tight-ODE relaxed-Newton tail."""
    e = entries["block"]
    tau = dict(e.initial_tangents())["orbit"]
    stage1 = cont.trace(
        e.system,
        e.initial_point,
        tau,
        cont.ContinuationSettings(max_steps=200, h_max=2.0, arclength_max=24.0),
    )
    p = stage1.points[-1]
    stage2 = cont.trace(
        e.system,
        p.u,
        p.tangent,
        cont.ContinuationSettings(
            max_steps=60,
            h0=1e-2,
            h_max=2.0,
            newton_tol=3e-7,
            direction=p.direction,
            locate_singularities=False,
            predictor="secant",
            arclength_max=15.0,
            rtol=1e-11,
            atol=1e-11,
        ),
    )
    return stage1, stage2


@pytest.fixture(scope="session")
def rod_branch(entries):
    e = entries["rod"]
    tau = dict(e.initial_tangents())["symmetric"]
    settings = cont.ContinuationSettings(max_steps=360, h0=1e-3)
    return cont.trace(e.system, e.initial_point, tau, settings)


@pytest.fixture(scope="session")
def slip_inplace(entries):
    e = entries["slip"]
    tau = dict(e.initial_tangents())["inplace"]
    settings = cont.ContinuationSettings(
        max_steps=60, h0=1e-2, h_max=0.1, rtol=1e-9, atol=1e-9
    )
    return cont.trace(e.system, e.initial_point, tau, settings)


@pytest.fixture(scope="session")
def slip_harmonic(entries):
    e = entries["slip"]
    tau = dict(e.initial_tangents())["harmonic"]
    settings = cont.ContinuationSettings(
        max_steps=40, h0=1e-2, h_max=0.1, rtol=1e-9, atol=1e-9
    )
    return cont.trace(e.system, e.initial_point, tau, settings)


def random_states(name: str, rng: np.random.Generator, count: int, phase: int = 1):
    """Random states inside the physically sensible chart of each model phase."""
    if name in ("ball", "block"):
        out = rng.uniform([-1.0, -2.0], [2.0, 2.0], size=(count, 2))
        if name == "block":
            out[:, 0] = rng.uniform(-0.25, 0.25, size=count)
        return out
    if name == "rod":
        return np.column_stack(
            [
                rng.uniform(-0.5, 1.5, count),
                rng.uniform(-0.6, 0.6, count),
                rng.uniform(-2.0, 2.0, count),
                rng.uniform(-20.0, 20.0, count),
            ]
        )
    if name == "slip":
        if phase == 1:
            return np.column_stack(
                [
                    rng.uniform(-0.6, 0.6, count),
                    rng.uniform(0.7, 1.3, count),
                    rng.uniform(-2.0, 2.0, count),
                    rng.uniform(-2.0, 2.0, count),
                ]
            )
        return np.column_stack(
            [
                rng.uniform(0.5, 2.0, count),
                rng.uniform(-0.6, 0.6, count),
                rng.uniform(-2.0, 2.0, count),
                rng.uniform(-2.0, 2.0, count),
                rng.uniform(-3.0, 3.0, count),
            ]
        )
    raise KeyError(name)


def event_states(name: str, rng: np.random.Generator, count: int, phase: int = 1):
    """Random states on the event manifold of a phase, with admissible rate."""
    if name == "ball":
        return np.column_stack([np.zeros(count), -rng.uniform(0.3, 3.0, count)])
    if name == "block":
        return np.column_stack([np.zeros(count), -rng.uniform(0.3, 3.0, count)])
    if name == "rod":
        alpha = rng.uniform(-0.5, 0.5, count)
        sgn = 1.0 if phase == 1 else -1.0
        y = sgn * 0.5 * np.sin(alpha)
        dy = -rng.uniform(0.3, 2.0, count)
        da = rng.uniform(-20.0, 20.0, count)
        return np.column_stack([y, alpha, dy, da])
    if name == "slip":
        if phase == 1:  # stance -> flight at l = l_o with positive extension rate
            return np.column_stack(
                [
                    rng.uniform(-0.5, 0.5, count),
                    np.ones(count),
                    rng.uniform(-2.0, 2.0, count),
                    rng.uniform(0.3, 2.0, count),
                ]
            )
        alpha = rng.uniform(-0.5, 0.5, count)
        y = np.cos(alpha)
        dx = rng.uniform(-1.0, 1.0, count)
        dy = -rng.uniform(0.5, 2.0, count)
        da = rng.uniform(-2.0, 2.0, count)
        return np.column_stack([y, alpha, dx, dy, da])
    raise KeyError(name)
