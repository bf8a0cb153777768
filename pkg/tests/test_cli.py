import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from rennala.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

RUN_TOML = """\
[problem]
dim = 10
sigma_add = 0.1

[delay]
kind = "sqrt"
n = 3

[run]
budget = {budget}
seeds = [0, 1]

[[method]]
name = "rennala_sgd"
gamma = 0.5
B = 2

[[method]]
name = "rennala_mvr"
gamma = 0.5
B = 2
p = 0.2
B0 = "B"
"""


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_run_writes_traces_and_is_repeatable(tmp_path):
    cfg = write(tmp_path, RUN_TOML.format(budget=50.0))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["trace_rennala_mvr_s0.csv", "trace_rennala_mvr_s1.csv",
                     "trace_rennala_sgd_s0.csv", "trace_rennala_sgd_s1.csv"]
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


def test_master_seed_changes_output(tmp_path):
    cfg = write(tmp_path, RUN_TOML.format(budget=50.0))
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "7"])
    f = "trace_rennala_mvr_s0.csv"
    assert (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()


def test_zero_budget_trace(tmp_path):
    cfg = write(tmp_path, RUN_TOML.format(budget=0.0))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "trace_rennala_sgd_s0.csv").read_text().splitlines()
    assert rows[0] == "time,iter,grad_sq_norm,f_value,oracle_calls"
    assert len(rows) == 2
    t, k, _, _, calls = rows[1].split(",")
    assert float(t) == 0.0 and k == "0" and calls == "0"


def test_run_rejects_grids(tmp_path):
    cfg = write(tmp_path, RUN_TOML.format(budget=5.0).replace("gamma = 0.5\nB = 2\n\n", "gamma = [0.5, 1.0]\nB = 2\n\n", 1))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "[problem]\ndim = -1\n")
    assert main(["run", "--config", str(cfg)]) == 2
    assert f"{cfg}:2:" in capsys.readouterr().err


def test_env_output_dir(tmp_path, monkeypatch):
    cfg = write(tmp_path, RUN_TOML.format(budget=5.0))
    monkeypatch.setenv("RENNALA_OUT", str(tmp_path / "env"))
    assert main(["run", "--config", str(cfg)]) == 0
    assert (tmp_path / "env" / "trace_rennala_sgd_s0.csv").exists()


def test_io_error_exit_code(tmp_path):
    cfg = write(tmp_path, RUN_TOML.format(budget=5.0))
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--config", str(cfg), "--out", str(blocker / "sub")]) == 3


def test_sweep_outputs(tmp_path):
    text = RUN_TOML.format(budget=100.0).replace("gamma = 0.5\nB = 2\n\n", "gamma = [0.25, 0.5]\nB = 2\n\n", 1)
    cfg = write(tmp_path, text)
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path), "--jobs", "1"]) == 0
    rows = list(csv.DictReader(open(tmp_path / "leaderboard.csv")))
    assert len(rows) == 3
    assert (tmp_path / "plot.svg").read_text().startswith("<svg")


def test_sweep_grid_too_large(tmp_path, capsys):
    assert main(["sweep", "--config", str(CONFIGS / "full_sqrt.toml"), "--out", str(tmp_path / "o")]) == 2
    assert "CPU-hours" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_verify_theory(tmp_path, capsys):
    assert main(["verify-theory", "--config", str(CONFIGS / "theory_default.toml"),
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "complexity.csv").read_text().startswith("quantity,value")
    lines = [json.loads(l) for l in (tmp_path / "report.jsonl").read_text().splitlines()]
    assert lines and all(l["ok"] for l in lines)


def test_verify_theory_outside_regime(tmp_path):
    cfg = write(tmp_path, "[theory]\neps = 0.5\nsigma = 0.5\ndelta = 10.0\nL_bar = 1.0\n")
    assert main(["verify-theory", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_verify_hardness_small(tmp_path):
    assert main(["verify-hardness", "--T", "5", "--p", "0.2", "--trials", "2000",
                 "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "hardness.csv")))
    assert rows and all(r["ok"] == "1" for r in rows)


def test_verify_engine_flags_bad_profile(tmp_path, capsys):
    code = main(["verify-engine", "--config", str(CONFIGS / "bad_profile.toml"), "--out", str(tmp_path)])
    assert code == 1
    out = capsys.readouterr().out
    assert "fixed computation model" in out
    bad = [json.loads(l) for l in (tmp_path / "report.jsonl").read_text().splitlines()
           if not json.loads(l)["ok"]]
    assert [b["name"] for b in bad] == ["config_profiles_valid"]


def test_bad_seed(capsys):
    assert main(["verify-theory", "--seed", "-1"]) == 2


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "rennala", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "verify-hardness" in r.stdout
