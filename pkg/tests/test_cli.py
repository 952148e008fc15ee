import dataclasses
import json

import numpy as np

from hoc.branchio import read_branch
from hoc.cli import main, run_point_checks
from hoc.zoo import ball


def test_list_models(capsys):
    assert main(["list-models"]) == 0
    out = capsys.readouterr().out
    assert "ball (m=1, n1=2)" in out
    assert "slip (m=2, nS=4, nF=5)" in out
    assert "rod (m=2" in out


def test_trace_writes_branch_files(tmp_path, capsys):
    out = tmp_path / "ball.csv"
    code = main(["trace", "--model", "ball", "--steps", "25", "--out", str(out)])
    assert code == 0
    assert out.exists() and out.with_suffix(".meta.json").exists()
    loaded = read_branch(out)
    assert len(loaded.points) == 26
    T = [cv.period for cv in loaded.points]
    H = [cv.level for cv in loaded.points]
    assert all(b >= a for a, b in zip(H, H[1:]))
    for t, h in zip(T[1:], H[1:]):
        assert abs(t - np.sqrt(8.0 * h)) <= 1e-6 * max(1.0, t)


def test_trace_zero_steps_single_point(tmp_path):
    out = tmp_path / "one.csv"
    assert main(["trace", "--model", "ball", "--steps", "0", "--out", str(out)]) == 0
    assert len(read_branch(out).points) == 1


def test_trace_unknown_model_usage_error(tmp_path):
    assert main(["trace", "--model", "nosuch", "--out", str(tmp_path / "x.csv")]) == 2


def test_trace_bad_branch_index(tmp_path):
    code = main(
        ["trace", "--model", "ball", "--branch", "7", "--out", str(tmp_path / "x.csv")]
    )
    assert code == 2


def test_config_file_with_flag_override(tmp_path):
    cfg = {
        "model": "ball",
        "limits": {"max_steps": 10},
        "outputs": {"branch_path": str(tmp_path / "cfg.csv")},
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(cfg))
    assert main(["trace", "--config", str(cfg_path), "--steps", "5"]) == 0
    assert len(read_branch(tmp_path / "cfg.csv").points) == 6  # flag wins


def test_determinism_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["trace", "--model", "ball", "--steps", "30", "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_branch_switch_roundtrip(tmp_path):
    src = tmp_path / "rod.csv"
    assert (
        main(["trace", "--model", "rod", "--steps", "360", "--h0", "1e-3", "--out", str(src)])
        == 0
    )
    loaded = read_branch(src)
    assert "simple_bifurcation" in loaded.classifications
    out = tmp_path / "switched.csv"
    code = main(
        [
            "branch-switch",
            "--input",
            str(src),
            "--sb-index",
            "0",
            "--branch-index",
            "0",
            "--steps",
            "10",
            "--h0",
            "5e-3",
            "--h-max",
            "0.05",
            "--no-locate",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    switched = read_branch(out)
    gaps = [abs(cv.duration(2) - cv.duration(1) - cv.duration(3)) for cv in switched.points]
    assert gaps[-1] > 1e-3  # symmetry broken

    assert (
        main(
            [
                "branch-switch",
                "--input",
                str(src),
                "--sb-index",
                "0",
                "--branch-index",
                "9",
                "--out",
                str(tmp_path / "bad.csv"),
            ]
        )
        == 2
    )
    assert (
        main(
            [
                "branch-switch",
                "--input",
                str(src),
                "--sb-index",
                "5",
                "--branch-index",
                "0",
                "--out",
                str(tmp_path / "bad2.csv"),
            ]
        )
        == 2
    )


def test_trace_slip_inplace_branch_index(tmp_path):
    out = tmp_path / "hop.csv"
    code = main(
        ["trace", "--model", "slip", "--from", "u0", "--branch", "1", "--steps", "12",
         "--h-max", "0.1", "--ode-rtol", "1e-9", "--ode-atol", "1e-9", "--out", str(out)]
    )
    assert code == 0
    loaded = read_branch(out)
    for cv in loaded.points[1:]:
        assert abs(cv.start(2)[2]) <= 1e-8  # flight-phase horizontal velocity
        assert cv.duration(2) > 0.0


def test_branch_switch_slip_unit_level_sb(tmp_path):
    # Cross the bifurcation at unit level so it lands in the file, then switch
    # onto its first emanating branch: the zero-flight-time family.
    out1 = tmp_path / "neg.csv"
    assert main(
        ["trace", "--model", "slip", "--branch", "1", "--direction", "-1", "--steps", "3",
         "--h0", "2e-2", "--h-max", "0.05", "--no-locate", "--out", str(out1)]
    ) == 0
    neg = read_branch(out1)
    u_off = np.array(
        [neg.points[-1].duration(i) for i in (3, 2, 1)], dtype=object
    )  # unused; the switch run restarts from the file point below
    out2 = tmp_path / "crossing.csv"
    from hoc.shooting import pack
    from hoc.zoo import get_model

    sys = get_model("slip").system
    start = json.dumps(list(pack(sys, neg.points[-1])))
    assert main(
        ["trace", "--model", "slip", "--from", start, "--direction",
         str(-neg.directions[-1]), "--steps", "8", "--h0", "2e-2", "--h-max", "0.05",
         "--out", str(out2)]
    ) == 0
    crossing = read_branch(out2)
    assert "simple_bifurcation" in crossing.classifications
    sb_cv = crossing.points[crossing.classifications.index("simple_bifurcation")]
    assert abs(sb_cv.level - 1.0) <= 1e-6

    out3 = tmp_path / "harmonic.csv"
    assert main(
        ["branch-switch", "--input", str(out2), "--sb-index", "0", "--branch-index", "0",
         "--steps", "10", "--h-max", "0.1", "--no-locate", "--out", str(out3)]
    ) == 0
    harmonic = read_branch(out3)
    for cv in harmonic.points[1:]:
        assert abs(cv.duration(2)) <= 1e-8  # zero flight time family


def test_check_passes_on_branch_point(tmp_path, capsys):
    src = tmp_path / "ball.csv"
    assert main(["trace", "--model", "ball", "--steps", "12", "--out", str(src)]) == 0
    code = main(["check", "--model", "ball", "--from-file", str(src), "--index", "6"])
    out = capsys.readouterr().out
    assert code == 0
    assert out.count("PASS") >= 3
    assert "FAIL" not in out


def test_check_negative_control_corrupted_reset_jacobian(entries, ball_branch):
    entry = ball()
    good = entry.system.phase(1)

    def bad_reset_jac(x):
        out = np.zeros((2, 2))
        out[0, 0] = 1.0
        out[1, 1] = -0.9  # deliberately wrong restitution derivative
        return out

    bad_phase = dataclasses.replace(good, reset_jacobian=bad_reset_jac)
    bad_sys = type(entry.system)(
        name="ball-corrupt",
        phases=(bad_phase,),
        anchor=entry.system.anchor,
        anchor_gradient=entry.system.anchor_gradient,
        normalization=entry.system.normalization,
    )
    point = ball_branch.points[10].u
    results = {name: status for name, status, _ in run_point_checks(bad_sys, point)}
    assert results["model_derivatives_fd"] == "fail"
    assert results["saltation_transport"] == "fail" or results["jacobian_fd"] == "fail"


def test_check_rod_transport(tmp_path, capsys):
    src = tmp_path / "rod.csv"
    assert (
        main(["trace", "--model", "rod", "--steps", "80", "--h0", "1e-3", "--out", str(src)])
        == 0
    )
    code = main(["check", "--model", "rod", "--from-file", str(src), "--index", "60"])
    out = capsys.readouterr().out
    assert code == 0
    assert "FAIL" not in out
