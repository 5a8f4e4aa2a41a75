import csv
import json
import subprocess
import sys

import pytest

from icbf.cli import EXIT_CONFIG, EXIT_OK, EXIT_SAFETY, _combine, main, trajectory_csv
from icbf.sim import CSV_COLUMNS, EXTRA_COLUMNS

SHORT = ["--t-final", "0.05", "--no-plots"]


def test_run_writes_outputs(tmp_path, capsys):
    code = main(["run", "range-localize-analytic", "--t-final", "0.05", "--out", str(tmp_path)])
    assert code == EXIT_OK
    out = tmp_path / "range-localize-analytic"
    for f in ("trajectory.csv", "summary.json", "manifest.json", "trajectory.svg", "barrier.svg"):
        assert (out / f).stat().st_size > 0
    rows = list(csv.reader((out / "trajectory.csv").open()))
    assert tuple(rows[0]) == tuple(CSV_COLUMNS) + tuple(EXTRA_COLUMNS)
    assert len(rows) == 1 + 51
    summary = json.loads((out / "summary.json").read_text())
    assert summary["min_h_r"] > 0 and summary["dt"] == 1e-3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok" and manifest["config_digest"] == summary["config_digest"]
    assert "min_h_r=" in capsys.readouterr().out


def test_negative_dt_is_config_error(tmp_path, capsys):
    code = main(["run", "range-localize-analytic", "--dt", "-1", "--out", str(tmp_path)])
    assert code == EXIT_CONFIG
    assert "dt" in capsys.readouterr().err
    assert not any(tmp_path.iterdir())


def test_bad_arguments_exit_2(tmp_path):
    assert main(["run"]) == EXIT_CONFIG
    assert main(["run", "nope-scenario", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["run", "range-localize-analytic", "--set", "filter.c", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["run", "range-localize-analytic", "--jobs", "0", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_unsafe_start_exit_2(tmp_path, capsys):
    code = main(["run", "range-localize-analytic", "--set", "barrier.lambda_s=5", "--out", str(tmp_path)] + SHORT)
    assert code == EXIT_CONFIG
    assert "x0" in capsys.readouterr().err


def test_baseline_reports_violation(tmp_path):
    code = main(["run", "range-localize-analytic", "--baseline", "--t-final", "2.5", "--no-plots",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    summary = json.loads((tmp_path / "range-localize-analytic-baseline" / "summary.json").read_text())
    assert summary["violation_time"] > 0


def test_safety_violation_exit_3(tmp_path, capsys):
    code = main(["run", "bearing-localize-anticrossing", "--dt", "0.05", "--out", str(tmp_path)])
    assert code == EXIT_SAFETY
    out = tmp_path / "bearing-localize-anticrossing"
    diag = json.loads((out / "summary.json").read_text())
    assert diag["step"] > 0 and diag["record"]["h_r"] < 0
    assert json.loads((out / "manifest.json").read_text())["status"] == "safety_violation"
    assert not (out / "trajectory.csv").exists()
    assert "safety violation" in capsys.readouterr().err


def test_no_timing_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["run", "bearing-avoid-anticrossing", "--no-timing", "--out", str(d)] + SHORT) == EXIT_OK
    name = "bearing-avoid-anticrossing/trajectory.csv"
    assert (a / name).read_bytes() == (b / name).read_bytes()


def test_svgs_are_byte_stable(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["run", "range-avoid-analytic", "--t-final", "0.02", "--no-timing", "--out", str(d)]) == 0
    for f in ("trajectory.svg", "barrier.svg"):
        assert (a / "range-avoid-analytic" / f).read_bytes() == (b / "range-avoid-analytic" / f).read_bytes()


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("ICBF_OUT_DIR", str(tmp_path / "env"))
    assert main(["run", "range-localize-anticrossing"] + SHORT) == EXIT_OK
    assert (tmp_path / "env" / "range-localize-anticrossing" / "trajectory.csv").exists()


def test_run_config_file_and_jobs(tmp_path):
    cfg = tmp_path / "mine.json"
    assert main(["show", "bearing-localize-analytic"]) == EXIT_OK
    doc = json.loads(subprocess.run([sys.executable, "-m", "icbf", "show", "bearing-localize-analytic"],
                                    capture_output=True, text=True, check=True).stdout)
    doc["name"] = "mine"
    cfg.write_text(json.dumps(doc))
    code = main(["run", str(cfg), "range-localize-analytic", "--jobs", "2", "--out", str(tmp_path)] + SHORT)
    assert code == EXIT_OK
    assert (tmp_path / "mine" / "trajectory.csv").exists()
    assert (tmp_path / "range-localize-analytic" / "trajectory.csv").exists()


def test_sweep(tmp_path, capsys):
    code = main(["sweep", "bearing-avoid-analytic", "--param", "filter.c", "--values", "1,100",
                 "--out", str(tmp_path)] + SHORT)
    assert code == EXIT_OK
    root = tmp_path / "bearing-avoid-analytic-sweep-filter.c"
    rows = list(csv.DictReader((root / "sweep.csv").open()))
    assert [r["value"] for r in rows] == ["1", "100"]
    assert all(r["status"] == "ok" for r in rows)
    assert float(rows[0]["smooth_slack"]) > 0
    assert "max_correction" in capsys.readouterr().out


@pytest.mark.parametrize("values", ["", " , ", "1,-5"])
def test_sweep_bad_values_exit_2(tmp_path, values):
    code = main(["sweep", "bearing-avoid-analytic", "--param", "filter.c", "--values", values,
                 "--out", str(tmp_path)] + SHORT)
    assert code == EXIT_CONFIG
    assert not any(tmp_path.iterdir())


def test_list_and_show(capsys):
    assert main(["list"]) == EXIT_OK
    names = capsys.readouterr().out.split()
    assert len(names) == 8 and "bearing-avoid-anticrossing" in names
    assert main(["show", "range-avoid-analytic"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["barrier"]["mode"] == "avoid"
    assert main(["show", "nothing"]) == EXIT_CONFIG


def test_exit_code_precedence():
    assert _combine([0, 1, 3]) == 3
    assert _combine([3, 2]) == 2
    assert _combine([0, 1]) == 1
    assert _combine([]) == 0


def test_csv_formatting():
    text = trajectory_csv({c: [0.1, float("nan")] for c in CSV_COLUMNS + EXTRA_COLUMNS}, timing=False)
    lines = text.splitlines()
    assert len(lines) == 3
    idx = lines[0].split(",").index("step_ms")
    assert lines[1].split(",")[idx] == "0.0"
    assert lines[2].split(",")[0] == ""
