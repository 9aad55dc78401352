import json
import subprocess
import sys
from importlib.resources import files

import pytest

from spotforward.cli import run_cli

DATA = files("spotforward") / "data"


def cli(*args):
    return subprocess.run([sys.executable, "-m", "spotforward", *map(str, args)],
                          capture_output=True, text=True)


def test_benchmark_csv(capsys):
    assert run_cli(["benchmark", "--config", str(DATA / "benchmark.yaml")]) == 0
    out = capsys.readouterr().out.splitlines()
    header, row = out[0].split(","), out[1].split(",")
    rec = dict(zip(header, row))
    assert float(rec["premium"]) == pytest.approx(0.7746, abs=1e-4)


def test_benchmark_json_round_trip(capsys):
    assert run_cli(["benchmark", "--config", str(DATA / "benchmark.yaml"), "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["command"] == "benchmark" and len(doc["rows"]) == 1


def test_paths_written(tmp_path, capsys):
    p = tmp_path / "paths.csv"
    assert run_cli(["jump", "--config", str(DATA / "default.yaml"), "--grid", "256", "--paths", str(p)]) == 0
    lines = p.read_text().splitlines()
    assert lines[0].split(",")[:5] == ["t", "P_normal", "P_stress", "delta_normal", "delta_stress"]
    assert len(lines) == 258


def test_stats_output(capsys):
    assert run_cli(["stats", "--quotes", str(DATA / "quotes_constant_ratio.csv")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 6
    for line in lines[1:]:
        assert float(line.split(",")[2]) == pytest.approx(-0.044, abs=1e-12)


def test_sweep_flags_lambda_zero(capsys):
    assert run_cli(["sweep", "--config", str(DATA / "default.yaml"), "--targets", "0.004,0.002"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "irrelevant at λ=0" in lines[1]
    assert lines[2].split(",")[-1] == "true"


def test_out_file(tmp_path, capsys):
    out = tmp_path / "o.csv"
    assert run_cli(["stats", "--quotes", str(DATA / "quotes_constant_ratio.csv"), "--out", str(out)]) == 0
    assert out.read_text().startswith("tenor_months,")


def test_picard_exit_codes(capsys):
    assert run_cli(["picard", "--config", str(DATA / "picard.yaml")]) == 0
    assert run_cli(["picard", "--config", str(DATA / "picard_divergent.yaml")]) == 2
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert json.loads(err)["error"] == "no-convergence"


def test_unreachable_target_exit_code(capsys):
    assert run_cli(["calibrate", "--config", str(DATA / "default.yaml"), "--targets", "-1"]) == 2


def test_unknown_command():
    r = cli("frobnicate")
    assert r.returncode == 1
    assert json.loads(r.stderr.strip().splitlines()[-1])["error"] == "usage"


def test_validation_error_is_structured(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("horizon_T: 1\nrho: 1\ncost: {c: -1}\n")
    r = cli("benchmark", "--config", cfg)
    assert r.returncode == 1
    err = json.loads(r.stderr.strip().splitlines()[-1])
    assert err["error"] == "validation" and err["field"] == "cost.c"


def test_missing_config_file(tmp_path):
    assert cli("benchmark", "--config", tmp_path / "nope.yaml").returncode == 1
