"""CLI tests: config parsing, scenario runs, CSV contract, exit codes."""

import os
import textwrap

import numpy as np
import pytest

from iongate import cli
from iongate.errors import ConvergenceError, ParameterError


def write_config(tmp_path, text, name="conf.ini"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return str(path)


def strip_created(text):
    lines = [l for l in text.splitlines()
             if not l.startswith("# created") and not l.startswith("created")]
    return "\n".join(lines)


WALSH_COMPARE = """\
    [scenario]
    name = walsh-compare
    output = cmp.csv

    [walsh-compare]
    loops = 1,2,4
    omega_hz = 5e3
"""

TRAJECTORY = """\
    [scenario]
    name = trajectory
    output = traj.csv

    [schedule]
    type = walsh

    [walsh]
    loops = 2
    omega_hz = 5e3

    [trajectory]
    branch = 2
    points = 80
"""

SLERB_PARAMETRIC = """\
    [scenario]
    name = slerb
    output = rb.csv
    seed = 7

    [slerb]
    lengths = 2,20,60
    sequences = 4
    shots = 200
    model = parametric
    eps_rb = 2e-3
    eps_leak = 1e-3
    resamples = 200
"""


# ---------------------------------------------------------------------------
# CSV layer


def test_emit_read_round_trip(tmp_path):
    table = {
        "x": np.array([1.0, np.pi, 1e-300, -3.25]),
        "k": np.array([0, 1, 2, 3]),
        "y": np.array([0.1, 0.2, 0.3, 0.4]) / 3.0,
    }
    path = str(tmp_path / "t.csv")
    cli.emit_csv(table, path, {"seed": "0"})
    meta, back = cli.read_csv(path)
    assert meta["seed"] == "0"
    assert back["k"].dtype.kind == "i"
    for key in table:
        assert np.array_equal(back[key], table[key])
    # a second emit of the parsed columns reproduces the bytes exactly
    path2 = str(tmp_path / "t2.csv")
    cli.emit_csv(back, path2, {"seed": "0"})
    assert (tmp_path / "t.csv").read_bytes() == (tmp_path / "t2.csv").read_bytes()


def test_emit_csv_empty_table(tmp_path):
    path = str(tmp_path / "e.csv")
    cli.emit_csv({"a": np.array([]), "b": np.array([])}, path, {"note": "x"})
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines == ["# note = x", "a,b"]
    _, back = cli.read_csv(path)
    assert back["a"].size == 0


def test_emit_csv_rejects_nan(tmp_path):
    with pytest.raises(ConvergenceError):
        cli.emit_csv({"a": np.array([1.0, np.nan])}, str(tmp_path / "n.csv"))
    assert not (tmp_path / "n.csv").exists()


def test_emit_csv_rejects_ragged(tmp_path):
    with pytest.raises(ParameterError):
        cli.emit_csv({"a": np.zeros(3), "b": np.zeros(2)}, str(tmp_path / "r.csv"))


# ---------------------------------------------------------------------------
# subcommands and exit codes


def test_schema_prints_reference(capsys):
    assert cli.main(["schema"]) == 0
    out = capsys.readouterr().out
    assert "[scenario]" in out
    assert "walsh-compare" in out
    # the Hz-to-angular convention must be stated up front
    assert "2*pi" in out


def test_validate_ok(tmp_path, capsys):
    path = write_config(tmp_path, WALSH_COMPARE)
    assert cli.main(["validate", path]) == 0
    assert "ok" in capsys.readouterr().out


def test_validate_unknown_scenario(tmp_path, capsys):
    path = write_config(tmp_path, "[scenario]\nname = nope\noutput = x.csv\n")
    assert cli.main(["validate", path]) == 1
    assert "config error" in capsys.readouterr().err


def test_validate_unknown_key(tmp_path):
    path = write_config(tmp_path, WALSH_COMPARE + "typo_key = 3\n")
    assert cli.main(["validate", path]) == 1


def test_validate_missing_required(tmp_path):
    path = write_config(tmp_path, """\
        [scenario]
        name = trajectory
        output = t.csv

        [schedule]
        type = walsh

        [walsh]
        loops = 2
    """)
    assert cli.main(["validate", path]) == 1


def test_validate_malformed_ini(tmp_path):
    path = write_config(tmp_path, "not an ini file at all\n")
    assert cli.main(["validate", path]) == 1


def test_run_missing_config_file(tmp_path):
    assert cli.main(["run", str(tmp_path / "absent.ini")]) == 1


def test_run_rejects_bad_threads(tmp_path):
    path = write_config(tmp_path, WALSH_COMPARE)
    assert cli.main(["run", path, "--threads", "0",
                     "--output-dir", str(tmp_path)]) == 1


def test_numeric_failure_exits_2_and_writes_nothing(tmp_path):
    # detuning grid entirely on one side of the balanced point: the scan
    # cannot bracket the crossing and must fail without partial outputs
    path = write_config(tmp_path, """\
        [scenario]
        name = calibration-scan
        output = cal.csv

        [smooth]
        delta_max_hz = -400e3
        delta_min_hz = -21700
        omega_hz = 5925.6
        tau_g = 5e-6
        tau_d = 100e-6
        t_c = 15.8e-6
        j = 3

        [scan]
        start_hz = -40e3
        stop_hz = -38e3
        points = 2
        nbar = 0
    """)
    out_dir = tmp_path / "out"
    assert cli.main(["run", path, "--output-dir", str(out_dir), "--quiet"]) == 2
    assert not out_dir.exists() or os.listdir(out_dir) == []


# ---------------------------------------------------------------------------
# scenario runs


def test_run_walsh_compare(tmp_path, capsys):
    path = write_config(tmp_path, WALSH_COMPARE)
    assert cli.main(["run", path, "--output-dir", str(tmp_path)]) == 0
    printed = capsys.readouterr().out.strip()
    assert printed.endswith("cmp.csv")
    meta, cols = cli.read_csv(str(tmp_path / "cmp.csv"))
    assert meta["scenario"] == "walsh-compare"
    assert meta["tool_version"]
    assert len(meta["config_hash"]) == 16
    assert list(cols["loops"]) == [1, 2, 4]
    # every calibrated loop count hits the same entangling angle
    assert np.allclose(cols["gate_angle_rad"], -np.pi / 2, atol=1e-9)
    # duration grows like sqrt(loops)
    assert cols["duration_s"][2] == pytest.approx(2 * cols["duration_s"][0])


def test_run_trajectory(tmp_path):
    path = write_config(tmp_path, TRAJECTORY)
    assert cli.main(["run", path, "--output-dir", str(tmp_path), "--quiet"]) == 0
    _, cols = cli.read_csv(str(tmp_path / "traj.csv"))
    assert list(cols) == ["t_s", "re_gamma", "im_gamma", "eta_rad", "theta_rad"]
    assert cols["t_s"][0] == 0.0
    assert cols["re_gamma"][0] == 0.0
    # loop closes and the geometric angle lands on the gate angle
    assert abs(cols["re_gamma"][-1]) < 1e-6
    assert abs(cols["im_gamma"][-1]) < 1e-6
    assert cols["theta_rad"][-1] == pytest.approx(-np.pi / 2, abs=1e-6)


def test_run_filterfn_columns(tmp_path):
    path = write_config(tmp_path, """\
        [scenario]
        name = filterfn
        output = ff.csv

        [smooth]
        delta_max_hz = -400e3
        delta_min_hz = -14161.0
        omega_hz = 5e3
        tau_g = 5e-6
        tau_d = 95e-6
        t_c = 0
        j = 4

        [filterfn]
        nbars = 0,10
        walsh_orders = 1,3
        points = 8
        omega_min_hz = 100
        omega_max_hz = 1e6
    """)
    assert cli.main(["run", path, "--output-dir", str(tmp_path), "--quiet"]) == 0
    _, cols = cli.read_csv(str(tmp_path / "ff.csv"))
    expected = {"omega_rad_s", "S_smooth_nbar0", "S_smooth_nbar10",
                "S_walsh1_nbar0", "S_walsh1_nbar10",
                "S_walsh3_nbar0", "S_walsh3_nbar10"}
    assert set(cols) == expected
    for name in expected:
        assert np.all(np.isfinite(cols[name]))
    # heating the mode can only raise the noise sensitivity
    assert np.all(cols["S_smooth_nbar10"] >= cols["S_smooth_nbar0"])


def test_run_offset_scan(tmp_path):
    path = write_config(tmp_path, """\
        [scenario]
        name = offset-scan
        output = off.csv

        [schedule]
        type = walsh

        [walsh]
        loops = 2
        omega_hz = 20e3

        [scan]
        start_hz = -400
        stop_hz = 400
        points = 3
        nbar = 0
    """)
    assert cli.main(["run", path, "--output-dir", str(tmp_path), "--quiet"]) == 0
    _, cols = cli.read_csv(str(tmp_path / "off.csv"))
    assert cols["offset_hz"][1] == 0.0
    assert cols["p_uu"][1] == pytest.approx(0.5, abs=1e-9)
    assert cols["fidelity"][1] == pytest.approx(1.0, abs=1e-9)


def test_run_thermal_sweep(tmp_path):
    path = write_config(tmp_path, """\
        [scenario]
        name = thermal-sweep
        output = th.csv

        [schedule]
        type = walsh

        [walsh]
        loops = 2
        omega_hz = 20e3

        [sweep]
        nbars = 0,2
        offset_hz = 120
    """)
    assert cli.main(["run", path, "--output-dir", str(tmp_path), "--quiet"]) == 0
    _, cols = cli.read_csv(str(tmp_path / "th.csv"))
    assert list(cols["nbar"]) == [0, 2]
    # under a detuning offset the hotter mode loses more fidelity
    assert cols["infidelity"][1] > cols["infidelity"][0] > 0


def test_run_slerb_and_fit_report(tmp_path):
    path = write_config(tmp_path, SLERB_PARAMETRIC)
    assert cli.main(["run", path, "--output-dir", str(tmp_path), "--quiet"]) == 0
    _, cols = cli.read_csv(str(tmp_path / "rb.csv"))
    assert list(cols) == ["N", "sequence_id", "shots",
                          "n_survival", "n_flip", "n_leak"]
    assert np.all(cols["n_survival"] + cols["n_flip"] + cols["n_leak"] == 200)
    report = (tmp_path / "rb_fit.txt").read_text()
    entries = dict(line.split(" = ", 1) for line in report.splitlines())
    assert float(entries["eps_rb"]) == pytest.approx(2e-3, rel=0.5)
    assert float(entries["eps_leak"]) == pytest.approx(1e-3, rel=0.5)
    assert float(entries["eps_rb_ci16"]) < float(entries["eps_rb_ci84"])
    assert entries["model"] == "parametric"


def test_run_slerb_external_input(tmp_path):
    first = write_config(tmp_path, SLERB_PARAMETRIC)
    assert cli.main(["run", first, "--output-dir", str(tmp_path), "--quiet"]) == 0
    second = write_config(tmp_path, f"""\
        [scenario]
        name = slerb
        output = refit.csv

        [slerb]
        input = {tmp_path / 'rb.csv'}
        resamples = 200
    """, name="refit.ini")
    assert cli.main(["run", second, "--output-dir", str(tmp_path), "--quiet"]) == 0
    original = dict(line.split(" = ", 1)
                    for line in (tmp_path / "rb_fit.txt").read_text().splitlines())
    refit = dict(line.split(" = ", 1)
                 for line in (tmp_path / "refit_fit.txt").read_text().splitlines())
    # refitting the written dataset reproduces the rates exactly
    assert refit["eps_rb"] == original["eps_rb"]
    assert refit["eps_leak"] == original["eps_leak"]
    assert refit["model"] == "external"


def test_determinism_excluding_timestamp(tmp_path):
    path = write_config(tmp_path, SLERB_PARAMETRIC)
    for sub in ("a", "b"):
        assert cli.main(["run", path, "--output-dir", str(tmp_path / sub),
                         "--quiet"]) == 0
    for name in ("rb.csv", "rb_fit.txt"):
        a = strip_created((tmp_path / "a" / name).read_text())
        b = strip_created((tmp_path / "b" / name).read_text())
        assert a == b


def test_seed_flag_overrides_config(tmp_path):
    path = write_config(tmp_path, SLERB_PARAMETRIC)
    assert cli.main(["run", path, "--output-dir", str(tmp_path / "a"),
                     "--quiet"]) == 0
    assert cli.main(["run", path, "--output-dir", str(tmp_path / "b"),
                     "--seed", "99", "--quiet"]) == 0
    meta_a, cols_a = cli.read_csv(str(tmp_path / "a" / "rb.csv"))
    meta_b, cols_b = cli.read_csv(str(tmp_path / "b" / "rb.csv"))
    assert meta_a["seed"] == "7"
    assert meta_b["seed"] == "99"
    assert not np.array_equal(cols_a["n_survival"], cols_b["n_survival"])
