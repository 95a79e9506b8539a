import csv
import io
import json
import subprocess
import sys

import pytest

from sgisim.cli import main

CONFIG = """\
[experiment]
stage = 1
engine = CI
trials = 20000
seed = 42

[initial]
theta = pi/6
"""


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "demo.ini"
    path.write_text(CONFIG)
    return path


def run_cli(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_run_writes_report_and_sidecar(cfg_file, tmp_path, capsys):
    out_path = tmp_path / "r.json"
    code, out, _ = run_cli(["run", cfg_file, "--output", out_path], capsys)
    assert code == 0
    doc = json.loads(out_path.read_text())
    assert doc["trial_count"] == 20000 and doc["histogram"]["Normal"] == 20000
    assert (tmp_path / "r.json.meta.json").exists()
    assert "audit: forbidden=0" in out and "pass" in out


def test_run_is_byte_identical_across_workers(cfg_file, tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run_cli(["run", cfg_file, "--output", a, "--workers", "1"], capsys)[0] == 0
    assert run_cli(["run", cfg_file, "--output", b, "--workers", "4"], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_seed_flag_overrides_config(cfg_file, tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run_cli(["run", cfg_file, "--output", a], capsys)
    run_cli(["run", cfg_file, "--output", b, "--seed", "7"], capsys)
    assert json.loads(a.read_text())["seed"] == 42
    assert json.loads(b.read_text())["seed"] == 7


def test_output_dir_from_environment(cfg_file, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SGISIM_OUTPUT_DIR", str(tmp_path / "reports"))
    code, _, _ = run_cli(["run", cfg_file, "--format", "csv"], capsys)
    assert code == 0
    text = (tmp_path / "reports" / "demo.report.csv").read_text()
    assert text.startswith("label,count,rate,lower95,upper95\n")


def test_parse_error_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text(CONFIG + "colour = blue\n")
    code, _, err = run_cli(["run", bad], capsys)
    assert code == 1
    assert "line 9" in err and "colour" in err


def test_missing_config_exits_2(tmp_path, capsys):
    code, _, _ = run_cli(["run", tmp_path / "nope.ini"], capsys)
    assert code == 2


def test_unwritable_output_exits_2(cfg_file, tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, _ = run_cli(["run", cfg_file, "--output", blocker / "r.json"], capsys)
    assert code == 2


def test_unknown_command_exits_1(capsys):
    assert run_cli(["frobnicate"], capsys)[0] == 1


def test_feasibility_defaults(capsys):
    code, out, _ = run_cli(["feasibility"], capsys)
    assert code == 0
    assert "9.544e-10" in out
    assert "0.2191" in out and "0.1217" in out and "0.02434" in out
    assert out.rstrip().splitlines()[-1].split()[:2] == ["timing", "pass"]


def test_feasibility_csv(capsys):
    code, out, _ = run_cli(["feasibility", "--csv", "--q1", "-1e", "--q2", "-5e"], capsys)
    assert code == 0
    rows = {r["quantity"]: r for r in csv.DictReader(io.StringIO(out))}
    assert float(rows["delta_phi[custom,verbatim]"]["value"]) == pytest.approx(0.1217, abs=1e-4)
    assert float(rows["delta_phi[custom,exact-denominator]"]["value"]) == pytest.approx(
        0.1220, abs=1e-4)
    assert rows["timing"]["value"] == "pass"


def test_feasibility_timing_fail(capsys):
    code, out, _ = run_cli(["feasibility", "--csv", "--tau-od", "20ns"], capsys)
    assert code == 0
    rows = {r["quantity"]: r for r in csv.DictReader(io.StringIO(out))}
    assert rows["timing"]["value"] == "fail"
    assert rows["timing: tau_od < tau_ts"]["value"] == "fail"


def test_feasibility_sweep(capsys):
    code, out, _ = run_cli(["feasibility", "--sweep", "d=50um,100um,200um"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 3
    assert [round(float(r["delta_phi_verbatim"]), 3) for r in rows] == [0.876, 0.219, 0.055]


def test_feasibility_bad_unit_exits_1(capsys):
    assert run_cli(["feasibility", "--d", "100 parsecs"], capsys)[0] == 1
    assert run_cli(["feasibility", "--sweep", "colour=1"], capsys)[0] == 1


@pytest.mark.parametrize("stage, rows", [(1, 16), (2, 12), (3, 24)])
def test_taxonomy(stage, rows, capsys):
    code, out, _ = run_cli(["taxonomy", "--stage", stage, "--csv"], capsys)
    assert code == 0
    assert len(list(csv.DictReader(io.StringIO(out)))) == rows
    code, out, _ = run_cli(["taxonomy", "--stage", stage], capsys)
    assert len(out.strip().splitlines()) == rows + 2


def test_classify_command(tmp_path, capsys):
    data = tmp_path / "raw.csv"
    data.write_text("ts_left,ts_right,od_left,od_right\n1,0,1,0\n0,1,1,0\n")
    code, out, _ = run_cli(["classify", data, "--stage", "1"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["label"] for r in rows] == ["Normal", "DelayedChoice"]


def test_classify_forbidden_exits_3(tmp_path, capsys):
    data = tmp_path / "raw.csv"
    data.write_text("ts_left,ts_right,od_left,od_right\n1,0,1,0\n1,0,1,1\n")
    code, out, _ = run_cli(["classify", data, "--stage", "1"], capsys)
    assert code == 3
    assert "Forbidden" in out


def test_classify_stage3(tmp_path, capsys):
    data = tmp_path / "raw.csv"
    data.write_text("ts_left,ts_right,od_theta,od_phi\n1,0,pi/4,0.122\n1,0,pi/4,0\n")
    code, out, _ = run_cli(["classify", data, "--stage", "3", "--expected-phase", "0.122"],
                           capsys)
    assert code == 0
    labels = [r["label"] for r in csv.DictReader(io.StringIO(out))]
    assert labels == ["RecoherenceWithPhase", "RecoherenceWithoutPhase"]


def test_classify_bad_row_exits_1(tmp_path, capsys):
    data = tmp_path / "raw.csv"
    data.write_text("ts_left,ts_right,od_theta\n1,0,0.3\n")
    assert run_cli(["classify", data, "--stage", "2"], capsys)[0] == 1


def test_console_script_exit_code(tmp_path):
    data = tmp_path / "raw.csv"
    data.write_text("ts_left,ts_right,od_left,od_right\n1,1,1,1\n")
    proc = subprocess.run([sys.executable, "-m", "sgisim.cli", "classify", str(data),
                           "--stage", "1"], capture_output=True, text=True)
    assert proc.returncode == 3
