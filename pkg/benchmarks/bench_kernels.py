"""Timing comparison of the numba and numpy kernel lanes.

Runs the hot paths (fixed-duration propagation with and without variational
matrices, event localization, and a full residual+Jacobian evaluation) on
each built-in model and reports per-call times and speedups.

Usage: python benchmarks/bench_kernels.py [--repeat 20]
"""

import argparse
import os
import time

import numpy as np

os.environ.setdefault("HOC_KERNEL", "numba")

from hoc import continuation as cont  # noqa: E402
from hoc.integrate import integrate_fixed, integrate_to_event  # noqa: E402
from hoc.shooting import evaluate_time_based  # noqa: E402
from hoc.zoo import get_model  # noqa: E402


CASES = {
    "ball": dict(x0=np.array([1.0, 0.2]), duration=1.2, t_max=5.0),
    "block": dict(x0=np.array([0.15, 0.05]), duration=4.0, t_max=10.0),
    "rod": dict(x0=np.array([0.3, 0.02, 0.0, 1.0]), duration=0.4, t_max=5.0),
    "slip": dict(x0=np.array([0.05, 0.92, 0.1, 0.0]), duration=0.45, t_max=2.0),
}


def _branch_point(entry):
    tau = entry.initial_tangents()[0][1]
    settings = cont.ContinuationSettings(max_steps=6, h0=1e-3, h_max=0.05)
    branch = cont.trace(entry.system, entry.initial_point, tau, settings)
    return branch.points[-1].u


def _time(fn, repeat):
    fn()  # warm-up (numba lane: triggers lazy model compiles)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def bench(repeat: int):
    rows = []
    for name, case in CASES.items():
        cvs = {}
        for lane in ("numba", "numpy"):
            os.environ["HOC_KERNEL"] = lane
            entry = get_model(name)  # fresh phases bind to the active lane
            sys = entry.system
            x0, duration, t_max = case["x0"], case["duration"], case["t_max"]
            cv = _branch_point(entry)
            cvs[lane] = {
                "flow": _time(lambda: integrate_fixed(sys, 1, x0, 0.0, duration), repeat),
                "flow+var": _time(
                    lambda: integrate_fixed(sys, 1, x0, 0.0, duration, with_sensitivities=True),
                    repeat,
                ),
                "event": _time(lambda: integrate_to_event(sys, 1, x0, 0.0, t_max), repeat),
                "residual+jac": _time(
                    lambda: evaluate_time_based(sys, cv, with_jacobian=True), repeat
                ),
            }
        for op in ("flow", "flow+var", "event", "residual+jac"):
            t_nb, t_np = cvs["numba"][op], cvs["numpy"][op]
            rows.append((name, op, t_nb, t_np, t_np / t_nb))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    rows = bench(args.repeat)
    print(f"{'model':8s} {'operation':14s} {'numba [ms]':>12s} {'numpy [ms]':>12s} {'speedup':>9s}")
    for name, op, t_nb, t_np, speedup in rows:
        print(f"{name:8s} {op:14s} {t_nb * 1e3:12.3f} {t_np * 1e3:12.3f} {speedup:8.1f}x")


if __name__ == "__main__":
    main()
