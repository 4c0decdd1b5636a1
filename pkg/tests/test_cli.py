import json
import os
import subprocess
import sys

from boltzgap.main import EXIT_CONFIG, EXIT_OK, main
from boltzgap.sweep.records import HEADER

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def cli(*args, cwd):
    env = dict(os.environ, PYTHONPATH=REPO, BOLTZGAP_RUNS_DIR=str(cwd))
    return subprocess.run([sys.executable, "-m", "boltzgap", *args], cwd=cwd, env=env,
                          capture_output=True, text=True, timeout=600)


def test_cli_run_writes_results(tmp_path):
    out = tmp_path / "gaps.csv"
    proc = cli("--dim", "2", "--gamma", "0", "--alpha", "-1", "--V", "3", "--N", "4", "--out", str(out),
               "--run-id", "cli", cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(HEADER)
    assert len(lines) == 2
    assert os.path.isfile(tmp_path / "cli" / "logs" / "run.log")


def test_cli_rejects_bad_dimension(tmp_path):
    proc = cli("--dim", "4", "--gamma", "0", "--alpha", "-1", "--V", "3", "--N", "4", cwd=tmp_path)
    assert proc.returncode == 2
    assert "configuration error" in proc.stderr


def test_grad_backend_needs_integrable_kernel(tmp_path):
    assert main(["run", "--dim", "2", "--gamma", "0", "--alpha", "0", "--V", "3", "--N", "4",
                 "--runs-dir", str(tmp_path)]) == EXIT_CONFIG


def test_unknown_flag_is_configuration_error(tmp_path):
    assert main(["run", "--dim", "2", "--bogus", "1"]) == EXIT_CONFIG


def test_empty_sweep_exits_zero(tmp_path):
    out = tmp_path / "empty.csv"
    code = main(["--dim", "2", "--gamma", "0", "--alpha", "-1", "--out", str(out), "--runs-dir", str(tmp_path)])
    assert code == EXIT_OK
    assert out.read_text().splitlines() == [",".join(HEADER)]


def test_preset_with_overrides_and_summarize(tmp_path):
    preset = os.path.join(REPO, "presets", "table1.cfg")
    code = main(["run", "--config", preset, "--gamma", "0.5", "--V", "3", "--N", "4", "--runs-dir", str(tmp_path),
                 "--run-id", "preset"])
    assert code == EXIT_OK
    cfg = json.load(open(tmp_path / "preset" / "config.json"))
    assert cfg["params"]["d"] == 2 and cfg["V"] == [3.0] and cfg["N"] == [4]
    assert main(["summarize", str(tmp_path / "preset")]) == EXIT_OK
    summary = json.load(open(tmp_path / "preset" / "summary.json"))
    assert summary["records"] == 1


def test_table1_preset_sweeps_every_gamma(tmp_path):
    preset = os.path.join(REPO, "presets", "table1.cfg")
    out = tmp_path / "table1.csv"
    code = main(["run", "--config", preset, "--V", "3", "--N", "4", "--plane-table", "off", "--runs-dir", str(tmp_path),
                 "--out", str(out)])
    assert code == EXIT_OK
    rows = out.read_text().splitlines()[1:]
    assert [float(r.split(",")[1]) for r in rows] == [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0]


def test_summarize_without_results_reports_nothing(tmp_path):
    assert main(["summarize", str(tmp_path / "nope"), "--results", str(tmp_path / "nope" / "x.csv")]) == EXIT_OK


def test_collect_results_bundles_run(tmp_path):
    assert main(["--dim", "2", "--gamma", "0", "--alpha", "-1", "--V", "3", "--N", "4",
                 "--runs-dir", str(tmp_path), "--run-id", "bundled"]) == EXIT_OK
    env = dict(os.environ, PYTHONPATH=REPO, BOLTZGAP_RUNS_DIR=str(tmp_path))
    proc = subprocess.run([sys.executable, os.path.join(REPO, "tools", "collect_results.py"), "bundled"],
                          cwd=tmp_path, env=env, capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    manifest = json.load(open(tmp_path / "bundled" / "bundle" / "manifest.json"))
    assert manifest["tool"] == "boltzgap"
    assert manifest["records"] == 1 and manifest["failed_points"] == 0
    assert "results.csv" in manifest["files"]
