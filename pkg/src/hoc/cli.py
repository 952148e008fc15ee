"""Command line front end: trace branches, switch at bifurcations, run checks.

Exit codes are a stable contract: 0 success, 2 usage error, 3 numerical
failure.  All run options live in a JSON config file and/or flags (flags
win).  Set ``HOC_LOG=debug`` for progress chatter on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys as _sys
from pathlib import Path

import numpy as np

from . import continuation as cont
from . import zoo
from .branchio import read_branch, write_branch
from .errors import HocError, GrazingError
from .integrate import DEFAULT_ATOL, DEFAULT_RTOL
from .model import HybridSystem, eval_modified_field, fd_gradient, fd_jacobian
from .sensitivity import saltation, TransitionData
from .shooting import (
    ContinuationVector,
    jacobian_time_based,
    layout,
    pack,
    residual_time_based,
    unpack,
    _integrate_segments,
)

__all__ = ["main", "run_point_checks"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def _log(msg: str) -> None:
    if os.environ.get("HOC_LOG", "").strip().lower() in ("debug", "info", "verbose", "1"):
        print(f"[hoc] {msg}", file=_sys.stderr)


class UsageError(Exception):
    pass


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc


def _cfg_get(cfg: dict, group: str, key: str, flag_value, default):
    if flag_value is not None:
        return flag_value
    return cfg.get(group, {}).get(key, default) if group else cfg.get(key, default)


def _settings_from(cfg: dict, args) -> cont.ContinuationSettings:
    return cont.ContinuationSettings(
        h0=float(_cfg_get(cfg, "step", "h0", args.h0, 1e-2)),
        h_min=float(_cfg_get(cfg, "step", "h_min", args.h_min, 1e-6)),
        h_max=float(_cfg_get(cfg, "step", "h_max", args.h_max, 0.5)),
        max_steps=int(_cfg_get(cfg, "limits", "max_steps", args.steps, 100)),
        direction=int(_cfg_get(cfg, None, "direction", args.direction, 1)),
        newton_tol=float(_cfg_get(cfg, "tolerances", "newton", args.newton_tol, 1e-9)),
        rtol=float(_cfg_get(cfg, "tolerances", "ode_rel", args.ode_rtol, DEFAULT_RTOL)),
        atol=float(_cfg_get(cfg, "tolerances", "ode_abs", args.ode_atol, DEFAULT_ATOL)),
        level_min=_cfg_get(cfg, "limits", "level_min", args.energy_min, None),
        level_max=_cfg_get(cfg, "limits", "level_max", args.energy_max, None),
        arclength_max=_cfg_get(cfg, "limits", "arclength_max", args.arclength_max, None),
        locate_singularities=bool(
            _cfg_get(cfg, None, "locate", (False if args.no_locate else None), True)
        ),
        predictor=str(_cfg_get(cfg, None, "predictor", args.predictor, "tangent")),
    )


def _model_entry(cfg: dict, args) -> zoo.ZooEntry:
    name = _cfg_get(cfg, None, "model", args.model, None)
    if not name:
        raise UsageError("no model given (use --model or config key 'model')")
    params = cfg.get("params", {})
    try:
        return zoo.get_model(name, **params)
    except (KeyError, TypeError) as exc:
        raise UsageError(str(exc)) from exc


def _start_point(entry: zoo.ZooEntry, cfg: dict, args):
    """Resolve the start point and tangent: named u0 (+ branch index) or inline vector."""
    start_spec = _cfg_get(cfg, None, "start", args.start, "u0")
    branch_idx = int(_cfg_get(cfg, None, "branch", args.branch, 0))
    if isinstance(start_spec, str) and start_spec == "u0":
        tans = entry.initial_tangents()
        if not 0 <= branch_idx < len(tans):
            raise UsageError(
                f"branch index {branch_idx} out of range; model '{entry.name}' has "
                f"{len(tans)} initial branches"
            )
        name, tau = tans[branch_idx]
        _log(f"starting at u0 along initial branch {branch_idx} ({name})")
        return entry.initial_point, tau
    if isinstance(start_spec, str):
        try:
            values = json.loads(start_spec)
        except json.JSONDecodeError as exc:
            raise UsageError(f"--from must be 'u0' or a JSON vector: {exc}") from exc
    else:
        values = start_spec
    u = np.asarray(values, dtype=float)
    lay = layout(entry.system)
    if u.shape != (lay.ncols,):
        raise UsageError(f"inline start vector must have length {lay.ncols}, got {u.shape}")
    return unpack(entry.system, u), None


def _summarize(branch: cont.Branch) -> str:
    sbs = sum(1 for p in branch.points if p.classification == "simple_bifurcation")
    turns = sum(1 for p in branch.points if p.classification == "turning")
    other = sum(1 for p in branch.points if p.classification == "singular_other")
    return (
        f"points={len(branch.points)} simple_bifurcations={sbs} turnings={turns} "
        f"other_singular={other} termination={branch.termination}"
    )


def cmd_list_models(args) -> int:
    for name in sorted(zoo.REGISTRY):
        entry = zoo.REGISTRY[name]()
        sys = entry.system
        dims = ", ".join(
            f"n{lbl}={p.dim}" for lbl, p in zip(sys.phase_labels, sys.phases)
        )
        norm = sys.normalization
        params = ", ".join(f"{k}={v:g}" for k, v in norm.items())
        branches = ", ".join(n for n, _ in entry.tangent_seeds)
        print(f"{name} (m={sys.num_phases}, {dims})  [{params}]  branches: {branches}")
    return EXIT_OK


def cmd_trace(args) -> int:
    cfg = _load_config(args.config)
    entry = _model_entry(cfg, args)
    settings = _settings_from(cfg, args)
    start, tau = _start_point(entry, cfg, args)
    out = _cfg_get(cfg, "outputs", "branch_path", args.out, f"{entry.name}_branch.csv")
    branch = cont.trace(entry.system, start, tau, settings)
    meta = write_branch(branch, entry.system, out)
    print(f"wrote {out} and {meta}")
    print(_summarize(branch))
    return EXIT_OK


def cmd_branch_switch(args) -> int:
    cfg = _load_config(args.config)
    loaded = read_branch(args.input)
    params = cfg.get("params", {})
    entry = zoo.get_model(loaded.model, **params)
    sys = entry.system
    sb_positions = [
        i for i, c in enumerate(loaded.classifications) if c == "simple_bifurcation"
    ]
    if not 0 <= args.sb_index < len(sb_positions):
        raise UsageError(
            f"sb-index {args.sb_index} out of range; file has {len(sb_positions)} "
            "simple bifurcation points"
        )
    u_sb = loaded.points[sb_positions[args.sb_index]]
    directions = cont.singular_directions(sys, u_sb)
    if not 0 <= args.branch_index < len(directions):
        raise UsageError(
            f"branch-index {args.branch_index} out of range; bifurcation has "
            f"{len(directions)} emanating directions"
        )
    settings = _settings_from(cfg, args)
    branch = cont.trace(sys, u_sb, directions[args.branch_index], settings)
    out = _cfg_get(cfg, "outputs", "branch_path", args.out, f"{entry.name}_switched.csv")
    meta = write_branch(branch, sys, out)
    print(f"wrote {out} and {meta}")
    print(_summarize(branch))
    return EXIT_OK


def run_point_checks(
    sys: HybridSystem,
    cv: ContinuationVector,
    fd_tol: float = 1e-4,
    deriv_tol: float = 1e-5,
    df2_tol: float = 1e-10,
    transport_tol: float = 1e-9,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> list[tuple[str, str, float]]:
    """Validation suite at one point: FD Jacobian, model derivatives, reset
    energy transport and saltation transport identities.

    Returns ``(name, status, max_error)`` triples with status ``pass``,
    ``fail`` or ``skip`` (transport checks skip at grazing configurations).
    """
    results = []
    m = sys.num_phases

    # Analytic vs finite-difference Jacobian of the time-based residual.
    J = jacobian_time_based(sys, cv, rtol=rtol, atol=atol)
    u = pack(sys, cv)
    h = 1e-6
    Jfd = np.empty_like(J)
    for j in range(u.size):
        e = np.zeros(u.size)
        e[j] = h
        rp = residual_time_based(sys, unpack(sys, u + e), rtol=rtol, atol=atol).value
        rm = residual_time_based(sys, unpack(sys, u - e), rtol=rtol, atol=atol).value
        Jfd[:, j] = (rp - rm) / (2.0 * h)
    err = float(np.max(np.abs(J - Jfd)) / max(1.0, float(np.max(np.abs(Jfd)))))
    results.append(("jacobian_fd", "pass" if err <= fd_tol else "fail", err))

    # Model derivative contracts at the segment start states.
    derr = 0.0
    for i in range(1, m + 2):
        p = sys.phase(1 if i == m + 1 else i)
        x = cv.start(i)
        scale = 1.0 + float(np.max(np.abs(x)))
        derr = max(derr, float(np.max(np.abs(fd_jacobian(p.field, x) - p.field_jacobian(x)))) / scale)
        derr = max(derr, float(np.max(np.abs(fd_gradient(p.event, x) - p.event_gradient(x)))) / scale)
        derr = max(derr, float(np.max(np.abs(fd_jacobian(p.reset, x) - p.reset_jacobian(x)))) / scale)
        derr = max(
            derr,
            float(
                np.max(
                    np.abs(fd_gradient(p.first_integral, x) - p.first_integral_gradient(x))
                )
            )
            / scale,
        )
    results.append(("model_derivatives_fd", "pass" if derr <= deriv_tol else "fail", derr))

    # Reset energy transport (Df2) and saltation transport at segment ends.
    segs = _integrate_segments(sys, cv, False, rtol, atol)
    df2_err = 0.0
    trans_err = 0.0
    grazing = False
    for i in range(1, m + 1):
        p = sys.phase(i)
        pn = sys.phase(i + 1)
        x_pre = segs[i - 1].final_state
        x_post = np.asarray(p.reset(x_pre), dtype=float)
        h_pre = p.first_integral(x_pre)
        df2_err = max(df2_err, abs(pn.first_integral(x_post) - h_pre) / (1.0 + abs(h_pre)))
        td = TransitionData(
            f_pre=eval_modified_field(sys, i, x_pre, cv.xi),
            f_post=eval_modified_field(sys, i + 1, x_post, cv.xi),
            reset_jac=np.asarray(p.reset_jacobian(x_pre), dtype=float),
            event_grad=np.asarray(p.event_gradient(x_pre), dtype=float),
        )
        try:
            S = saltation(td)
        except GrazingError:
            grazing = True
            continue
        trans_err = max(trans_err, float(np.max(np.abs(S @ td.f_pre - td.f_post))))
        dh_pre = np.asarray(p.first_integral_gradient(x_pre), dtype=float)
        dh_post = np.asarray(pn.first_integral_gradient(x_post), dtype=float)
        trans_err = max(trans_err, float(np.max(np.abs(dh_post @ S - dh_pre))))
    results.append(("reset_energy_df2", "pass" if df2_err <= df2_tol else "fail", df2_err))
    if grazing:
        results.append(("saltation_transport", "skip", trans_err))
    else:
        results.append(
            ("saltation_transport", "pass" if trans_err <= transport_tol else "fail", trans_err)
        )
    return results


def cmd_check(args) -> int:
    cfg = _load_config(args.config)
    entry = _model_entry(cfg, args)
    sys = entry.system
    if args.from_file:
        loaded = read_branch(args.from_file)
        if not 0 <= args.index < len(loaded.points):
            raise UsageError(f"point index {args.index} out of range")
        cv = loaded.points[args.index]
    else:
        cv, _ = _start_point(entry, cfg, args)
    results = run_point_checks(sys, cv, rtol=args.ode_rtol or DEFAULT_RTOL, atol=args.ode_atol or DEFAULT_ATOL)
    failed = False
    for name, status, err in results:
        print(f"{status.upper():5s} {name}  max_err={err:.3e}")
        failed = failed or status == "fail"
    return EXIT_NUMERICAL if failed else EXIT_OK


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--model", help="zoo model name")
    p.add_argument("--from", dest="start", help="'u0' or inline JSON vector", default=None)
    p.add_argument("--branch", type=int, default=None, help="initial branch index at u0")
    p.add_argument("--direction", type=int, choices=(-1, 1), default=None)
    p.add_argument("--steps", type=int, default=None, help="max accepted steps")
    p.add_argument("--h0", type=float, default=None)
    p.add_argument("--h-min", type=float, default=None)
    p.add_argument("--h-max", type=float, default=None)
    p.add_argument("--energy-min", type=float, default=None)
    p.add_argument("--energy-max", type=float, default=None)
    p.add_argument("--arclength-max", type=float, default=None)
    p.add_argument("--ode-rtol", type=float, default=None)
    p.add_argument("--ode-atol", type=float, default=None)
    p.add_argument("--newton-tol", type=float, default=None)
    p.add_argument("--event-tol", type=float, default=None)
    p.add_argument("--predictor", choices=("tangent", "secant"), default=None)
    p.add_argument("--no-locate", action="store_true", help="skip singular-point localization")
    p.add_argument("--out", help="branch CSV output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hoc",
        description="Continuation of periodic orbits in conservative hybrid dynamical systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list-models", help="list built-in models")

    p_trace = sub.add_parser("trace", help="trace a solution branch")
    _add_run_flags(p_trace)

    p_switch = sub.add_parser("branch-switch", help="trace a branch emanating from a bifurcation")
    _add_run_flags(p_switch)
    p_switch.add_argument("--input", required=True, help="branch CSV containing the bifurcation")
    p_switch.add_argument("--sb-index", type=int, default=0)
    p_switch.add_argument("--branch-index", type=int, default=0)

    p_check = sub.add_parser("check", help="validate derivatives and invariants at a point")
    _add_run_flags(p_check)
    p_check.add_argument("--from-file", help="branch CSV to take the point from")
    p_check.add_argument("--index", type=int, default=0, help="point index in --from-file")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "list-models": cmd_list_models,
        "trace": cmd_trace,
        "branch-switch": cmd_branch_switch,
        "check": cmd_check,
    }
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    except HocError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=_sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
