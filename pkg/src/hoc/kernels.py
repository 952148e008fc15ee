"""Adaptive Dormand-Prince 4(5) propagation kernels.

The three entry points below are written in nopython-compatible style and
serve two execution lanes:

* numba lane (default): the same functions compiled with ``numba.njit`` using
  first-class function types, so one kernel compilation is shared by every
  model whose callables are numba dispatchers.
* numpy lane: the plain functions as they stand, used when the environment
  variable ``HOC_KERNEL=numpy`` is set or a model's callables cannot be
  compiled.

All kernels integrate the dissipation-modified field ``sgn * (f(x) + xi*dH(x))``
so that reverse-time propagation (``sgn=-1``) reuses the same code path.
Step-size control follows the usual embedded-pair error estimate; for the
variational kernel the controller is driven by the base-state error only.
"""

import math
import os

import numpy as np

__all__ = [
    "STATUS_OK",
    "STATUS_STEP_UNDERFLOW",
    "STATUS_NO_EVENT",
    "STATUS_BAD_START",
    "STATUS_MAX_STEPS",
    "lane",
    "numba_kernels",
    "compile_state_fn",
    "compile_matrix_fn",
    "compile_scalar_fn",
    "rk45_fixed",
    "rk45_fixed_var",
    "rk45_event",
]

STATUS_OK = 0
STATUS_STEP_UNDERFLOW = 1
STATUS_NO_EVENT = 2
STATUS_BAD_START = 3
STATUS_MAX_STEPS = 4

# Dormand-Prince 5(4) tableau.
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = (
    9017 / 3168,
    -355 / 33,
    46732 / 5247,
    49 / 176,
    -5103 / 18656,
)
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)

# Transposed interpolation matrix of the pair's quartic continuous extension;
# dense state at fraction th of a step is
#   x_old + h * (((q3*th + q2)*th + q1)*th + q0) * th,   q_i = _PT[i] @ K.
_PT = np.ascontiguousarray(
    np.array(
        [
            [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
            [0, 0, 0, 0],
            [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
            [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
            [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
            [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
            [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
        ]
    ).T
)

_SAFETY = 0.9
_FAC_MIN = 0.2
_FAC_MAX = 5.0
_ORDER_EXP = -0.2  # -1/(order of the error estimate + 1)


def lane() -> str:
    """Active kernel lane, ``"numba"`` unless ``HOC_KERNEL=numpy`` is set."""
    value = os.environ.get("HOC_KERNEL", "").strip().lower()
    if value in ("numpy", "python", "off"):
        return "numpy"
    return "numba"


def rk45_fixed(field, dh, x0, xi, sgn, duration, rtol, atol, max_steps):
    """Propagate ``dx/dt = sgn*(field(x) + xi*dh(x))`` over ``[0, duration]``.

    Returns ``(x_final, status, accepted_steps)``.
    """
    n = x0.shape[0]
    x = x0.copy()
    if duration == 0.0:
        return x, STATUS_OK, 0

    def rhs(y):
        return sgn * (field(y) + xi * dh(y))

    f0 = rhs(x)

    # Hairer-style deterministic initial step selection.
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(x[i])
        d0 += (x[i] / sc) ** 2
        d1 += (f0[i] / sc) ** 2
    d0 = math.sqrt(d0 / n)
    d1 = math.sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h = 1e-6
    else:
        h = 0.01 * d0 / d1
    xp = x + h * f0
    fp = rhs(xp)
    d2 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(x[i])
        d2 += ((fp[i] - f0[i]) / sc) ** 2
    d2 = math.sqrt(d2 / n) / h
    dm = max(d1, d2)
    if dm <= 1e-15:
        h1 = max(1e-6, h * 1e-3)
    else:
        h1 = (0.01 / dm) ** 0.2
    h = min(100.0 * h, h1, duration)

    hmin = 1e-13 * max(1.0, duration)
    t = 0.0
    nsteps = 0
    rejected = False
    while True:
        remaining = duration - t
        if remaining <= 0.0:
            break
        last = h >= remaining
        if last:
            h = remaining

        k1 = f0
        y = x + h * (_A21 * k1)
        k2 = rhs(y)
        y = x + h * (_A31 * k1 + _A32 * k2)
        k3 = rhs(y)
        y = x + h * (_A41 * k1 + _A42 * k2 + _A43 * k3)
        k4 = rhs(y)
        y = x + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4)
        k5 = rhs(y)
        y = x + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5)
        k6 = rhs(y)
        xn = x + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
        k7 = rhs(xn)

        err = 0.0
        for i in range(n):
            e = h * (
                _E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i] + _E6 * k6[i] + _E7 * k7[i]
            )
            sc = atol + rtol * max(abs(x[i]), abs(xn[i]))
            err += (e / sc) ** 2
        err = math.sqrt(err / n)

        if err <= 1.0:
            t += h
            x = xn
            f0 = k7
            nsteps += 1
            if last:
                break
            if err == 0.0:
                factor = _FAC_MAX
            else:
                factor = min(_FAC_MAX, max(_FAC_MIN, _SAFETY * err**_ORDER_EXP))
            if rejected:
                factor = min(1.0, factor)
            h *= factor
            rejected = False
        else:
            rejected = True
            h *= min(1.0, max(_FAC_MIN, _SAFETY * err**_ORDER_EXP))
            if h < hmin:
                return x, STATUS_STEP_UNDERFLOW, nsteps
        if nsteps >= max_steps:
            return x, STATUS_MAX_STEPS, nsteps
    return x, STATUS_OK, nsteps


def rk45_fixed_var(field, jac, dh, hess, x0, xi, sgn, duration, rtol, atol, max_steps):
    """Like :func:`rk45_fixed` but co-integrating the variational matrices.

    The augmented state is ``[x, Phi.ravel(), Psi]`` with
    ``Phi' = J(x)*Phi`` and ``Psi' = J(x)*Psi + dH(x)`` where
    ``J = jac(x) + xi*hess(x)``.  Step control covers the full augmented
    state: base-state-only control silently corrupts the sensitivities when
    the trajectory lies in an invariant subspace that never excites dynamics
    the variational flow does see.
    Returns ``(x_final, Phi, Psi, status, accepted_steps)``.
    """
    n = x0.shape[0]
    m = n + n * n + n
    y0 = np.zeros(m)
    y0[:n] = x0
    for i in range(n):
        y0[n + i * n + i] = 1.0
    if duration == 0.0:
        phi = np.eye(n)
        psi = np.zeros(n)
        return x0.copy(), phi, psi, STATUS_OK, 0

    def rhs(y):
        xs = y[:n].copy()
        fx = field(xs)
        dhs = dh(xs)
        J = jac(xs) + xi * hess(xs)
        out = np.empty(m)
        for i in range(n):
            out[i] = sgn * (fx[i] + xi * dhs[i])
        Phi = y[n : n + n * n].copy().reshape((n, n))
        dPhi = np.dot(J, Phi)
        for i in range(n * n):
            out[n + i] = sgn * dPhi[i // n, i % n]
        Psi = y[n + n * n :].copy()
        dPsi = np.dot(J, Psi)
        for i in range(n):
            out[n + n * n + i] = sgn * (dPsi[i] + dhs[i])
        return out

    y = y0
    f0 = rhs(y)

    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(y[i])
        d0 += (y[i] / sc) ** 2
        d1 += (f0[i] / sc) ** 2
    d0 = math.sqrt(d0 / n)
    d1 = math.sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h = 1e-6
    else:
        h = 0.01 * d0 / d1
    yp = y + h * f0
    fp = rhs(yp)
    d2 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(y[i])
        d2 += ((fp[i] - f0[i]) / sc) ** 2
    d2 = math.sqrt(d2 / n) / h
    dm = max(d1, d2)
    if dm <= 1e-15:
        h1 = max(1e-6, h * 1e-3)
    else:
        h1 = (0.01 / dm) ** 0.2
    h = min(100.0 * h, h1, duration)

    hmin = 1e-13 * max(1.0, duration)
    t = 0.0
    nsteps = 0
    rejected = False
    status = STATUS_OK
    while True:
        remaining = duration - t
        if remaining <= 0.0:
            break
        last = h >= remaining
        if last:
            h = remaining

        k1 = f0
        yn = y + h * (_A21 * k1)
        k2 = rhs(yn)
        yn = y + h * (_A31 * k1 + _A32 * k2)
        k3 = rhs(yn)
        yn = y + h * (_A41 * k1 + _A42 * k2 + _A43 * k3)
        k4 = rhs(yn)
        yn = y + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4)
        k5 = rhs(yn)
        yn = y + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5)
        k6 = rhs(yn)
        yn = y + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
        k7 = rhs(yn)

        err = 0.0
        for i in range(m):
            e = h * (
                _E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i] + _E6 * k6[i] + _E7 * k7[i]
            )
            sc = atol + rtol * max(abs(y[i]), abs(yn[i]))
            err += (e / sc) ** 2
        err = math.sqrt(err / m)

        if err <= 1.0:
            t += h
            y = yn
            f0 = k7
            nsteps += 1
            if last:
                break
            if err == 0.0:
                factor = _FAC_MAX
            else:
                factor = min(_FAC_MAX, max(_FAC_MIN, _SAFETY * err**_ORDER_EXP))
            if rejected:
                factor = min(1.0, factor)
            h *= factor
            rejected = False
        else:
            rejected = True
            h *= min(1.0, max(_FAC_MIN, _SAFETY * err**_ORDER_EXP))
            if h < hmin:
                status = STATUS_STEP_UNDERFLOW
                break
        if nsteps >= max_steps:
            status = STATUS_MAX_STEPS
            break

    x = y[:n].copy()
    phi = y[n : n + n * n].copy().reshape((n, n))
    psi = y[n + n * n :].copy()
    return x, phi, psi, status, nsteps


def rk45_event(field, dh, event, x0, xi, tmax, rtol, atol, etol, max_steps):
    """Integrate forward until the first down-crossing of ``event``.

    The crossing is bracketed on the quartic dense output of each accepted
    step (sampled at quarter points) and refined with an Illinois-type
    regula-falsi/bisection hybrid.  If several sign alternations show up
    inside one accepted step, the step is rejected and retried at half size.
    Returns ``(t_hit, x_pre, status, accepted_steps)``.
    """
    n = x0.shape[0]
    x = x0.copy()
    g_prev = event(x)
    if g_prev <= 0.0:
        return 0.0, x, STATUS_BAD_START, 0

    def rhs(y):
        return field(y) + xi * dh(y)

    f0 = rhs(x)

    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(x[i])
        d0 += (x[i] / sc) ** 2
        d1 += (f0[i] / sc) ** 2
    d0 = math.sqrt(d0 / n)
    d1 = math.sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h = 1e-6
    else:
        h = 0.01 * d0 / d1
    xp = x + h * f0
    fp = rhs(xp)
    d2 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(x[i])
        d2 += ((fp[i] - f0[i]) / sc) ** 2
    d2 = math.sqrt(d2 / n) / h
    dm = max(d1, d2)
    if dm <= 1e-15:
        h1 = max(1e-6, h * 1e-3)
    else:
        h1 = (0.01 / dm) ** 0.2
    h = min(100.0 * h, h1, tmax)

    hmin = 1e-13 * max(1.0, tmax)
    t = 0.0
    nsteps = 0
    rejected = False
    K = np.empty((7, n))
    while True:
        remaining = tmax - t
        if remaining <= 0.0:
            return t, x, STATUS_NO_EVENT, nsteps
        last = h >= remaining
        if last:
            h = remaining

        k1 = f0
        y = x + h * (_A21 * k1)
        k2 = rhs(y)
        y = x + h * (_A31 * k1 + _A32 * k2)
        k3 = rhs(y)
        y = x + h * (_A41 * k1 + _A42 * k2 + _A43 * k3)
        k4 = rhs(y)
        y = x + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4)
        k5 = rhs(y)
        y = x + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5)
        k6 = rhs(y)
        xn = x + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
        k7 = rhs(xn)

        err = 0.0
        for i in range(n):
            e = h * (
                _E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i] + _E6 * k6[i] + _E7 * k7[i]
            )
            sc = atol + rtol * max(abs(x[i]), abs(xn[i]))
            err += (e / sc) ** 2
        err = math.sqrt(err / n)

        if err > 1.0:
            rejected = True
            h *= min(1.0, max(_FAC_MIN, _SAFETY * err**_ORDER_EXP))
            if h < hmin:
                return t, x, STATUS_STEP_UNDERFLOW, nsteps
            if nsteps >= max_steps:
                return t, x, STATUS_MAX_STEPS, nsteps
            continue

        # Accepted step: scan the dense output for event sign changes.
        K[0] = k1
        K[1] = k2
        K[2] = k3
        K[3] = k4
        K[4] = k5
        K[5] = k6
        K[6] = k7
        Q = np.dot(_PT, K)  # (4, n)

        g_vals = np.empty(5)
        g_vals[0] = g_prev
        for j in range(1, 4):
            th = 0.25 * j
            xd = x + (h * th) * (((Q[3] * th + Q[2]) * th + Q[1]) * th + Q[0])
            g_vals[j] = event(xd)
        g_vals[4] = event(xn)

        nflips = 0
        first_a = -1
        for j in range(4):
            ga = g_vals[j]
            gb = g_vals[j + 1]
            if (ga > 0.0 and gb <= 0.0) or (ga <= 0.0 and gb > 0.0):
                if nflips == 0:
                    first_a = j
                nflips += 1

        if nflips == 0:
            t += h
            x = xn
            f0 = k7
            g_prev = g_vals[4]
            nsteps += 1
            if err == 0.0:
                factor = _FAC_MAX
            else:
                factor = min(_FAC_MAX, max(_FAC_MIN, _SAFETY * err**_ORDER_EXP))
            if rejected:
                factor = min(1.0, factor)
            h *= factor
            rejected = False
            if nsteps >= max_steps:
                return t, x, STATUS_MAX_STEPS, nsteps
            continue

        if nflips > 1:
            # Several roots inside one step: halve and re-search.
            rejected = True
            h *= 0.5
            if h < hmin:
                return t, x, STATUS_STEP_UNDERFLOW, nsteps
            continue

        # Single down-crossing: refine on the dense output.
        a = 0.25 * first_a
        b = 0.25 * (first_a + 1)
        ga = g_vals[first_a]
        gb = g_vals[first_a + 1]
        th = b
        gc = gb
        for _ in range(120):
            if ga != gb:
                th = (ga * b - gb * a) / (ga - gb)
            else:
                th = 0.5 * (a + b)
            if th <= a or th >= b:
                th = 0.5 * (a + b)
            xd = x + (h * th) * (((Q[3] * th + Q[2]) * th + Q[1]) * th + Q[0])
            gc = event(xd)
            if abs(gc) <= 0.01 * etol or (b - a) < 1e-15:
                break
            if (ga > 0.0 and gc <= 0.0) or (ga <= 0.0 and gc > 0.0):
                b = th
                gb = gc
                ga *= 0.5  # Illinois cut on the stagnant end
            else:
                a = th
                ga = gc
                gb *= 0.5
        x_pre = x + (h * th) * (((Q[3] * th + Q[2]) * th + Q[1]) * th + Q[0])
        return t + h * th, x_pre, STATUS_OK, nsteps + 1


_NUMBA_KERNELS = None


def numba_kernels():
    """Compile (once per process; disk-cached) and return the numba kernels."""
    global _NUMBA_KERNELS
    if _NUMBA_KERNELS is None:
        from numba import njit
        from numba.core import types

        f8 = types.float64
        i8 = types.int64
        vec = types.FunctionType(f8[::1](f8[::1]))
        mat = types.FunctionType(f8[:, ::1](f8[::1]))
        sca = types.FunctionType(f8(f8[::1]))

        sig_fixed = types.Tuple((f8[::1], i8, i8))(vec, vec, f8[::1], f8, f8, f8, f8, f8, i8)
        sig_var = types.Tuple((f8[::1], f8[:, ::1], f8[::1], i8, i8))(
            vec, mat, vec, mat, f8[::1], f8, f8, f8, f8, f8, i8
        )
        sig_event = types.Tuple((f8, f8[::1], i8, i8))(
            vec, vec, sca, f8[::1], f8, f8, f8, f8, f8, i8
        )
        _NUMBA_KERNELS = {
            "fixed": njit(sig_fixed, cache=True)(rk45_fixed),
            "fixed_var": njit(sig_var, cache=True)(rk45_fixed_var),
            "event": njit(sig_event, cache=True)(rk45_event),
        }
    return _NUMBA_KERNELS


def compile_state_fn(fn):
    """Compile a ``state -> state-like vector`` callable for the numba lane."""
    from numba import njit
    from numba.core import types

    f8 = types.float64
    return njit(f8[::1](f8[::1]), cache=False)(fn)


def compile_matrix_fn(fn):
    from numba import njit
    from numba.core import types

    f8 = types.float64
    return njit(f8[:, ::1](f8[::1]), cache=False)(fn)


def compile_scalar_fn(fn):
    from numba import njit
    from numba.core import types

    f8 = types.float64
    return njit(f8(f8[::1]), cache=False)(fn)
