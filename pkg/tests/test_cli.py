"""Command line contract: exit codes, files, seed fallback, examples."""

import json

import pytest

from arwlab import cli
from arwlab.carpet import PropertyViolationError, RunRecord


def test_simulate_example_writes_one_row_and_reruns_identically(tmp_path):
    out = str(tmp_path / "sim")
    args = ["simulate", "--lambda", "1", "--zeta", "0.5", "--L", "60",
            "--k", "5", "--trials", "20", "--seed", "7", "--out", out]
    assert cli.main(args) == 0
    summary = (tmp_path / "sim.summary.csv").read_bytes()
    trials = (tmp_path / "sim.trials.jsonl").read_bytes()
    lines = summary.decode().splitlines()
    assert lines[-2].startswith("cell,")
    assert len([l for l in lines if not l.startswith("#")]) == 2  # header + 1 row
    assert cli.main(args) == 0
    assert (tmp_path / "sim.summary.csv").read_bytes() == summary
    assert (tmp_path / "sim.trials.jsonl").read_bytes() == trials


def test_simulate_config_file_with_flag_override(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[ensemble]\nseed = 5\ntrials = 50\n"
                   "[grid]\nlam = 0.5\nzeta = 0.3\nL = 40\n")
    out = str(tmp_path / "cfg")
    assert cli.main(["simulate", "--config", str(ini), "--trials", "10",
                     "--out", out]) == 0
    header = json.loads((tmp_path / "cfg.trials.jsonl").read_text().splitlines()[0])
    assert header["trials"] == 10  # flag wins over the file
    assert header["master_seed"] == 5


def test_usage_errors_exit_2(tmp_path):
    out = str(tmp_path / "bad")
    assert cli.main(["simulate", "--lambda", "1", "--zeta", "-1",
                     "--L", "40", "--trials", "5", "--out", out]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["no-such-command"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["carpet", "--lambda", "1"])  # missing required flags
    assert exc.value.code == 2


def test_replay_check_example(capsys):
    assert cli.main(["replay-check", "--lambda", "1", "--a", "4", "--K", "16",
                     "--n", "8", "--seed", "3"]) == 0
    assert "all blocks replay exactly" in capsys.readouterr().out


def test_block_stats_paper_scale(capsys):
    assert cli.main(["block-stats", "--paper-scale", "--lambda", "1"]) == 0
    out = capsys.readouterr().out
    assert "bound <= -48: True" in out and "bound <= -40: True" in out


def test_block_stats_tail_and_drift_table(capsys):
    assert cli.main(["block-stats", "--tail", "2", "1", "-2"]) == 0
    assert "-4" in capsys.readouterr().out
    assert cli.main(["block-stats", "--lambda", "1", "--a", "3"]) == 0
    out = capsys.readouterr().out
    assert "1/4" in out and "5/12" in out  # exact drifts at v=1


def test_block_stats_pooled_report(tmp_path, capsys):
    path = str(tmp_path / "report.json")
    assert cli.main(["block-stats", "--lambda", "0.5", "--a", "6", "--runs", "10",
                     "--n", "4", "--seed", "2", "--json", path,
                     "--dominance"]) == 0
    out = capsys.readouterr().out
    assert "violations: none" in out
    assert "dominance" in out
    parsed = json.loads((tmp_path / "report.json").read_text())
    assert parsed["stats"]


def test_carpet_records_and_env_seed(tmp_path, monkeypatch):
    out = str(tmp_path / "runs.jsonl")
    monkeypatch.setenv("ARW_SEED", "123")
    assert cli.main(["carpet", "--lambda", "0.5", "--a", "3", "--n", "4",
                     "--trials", "2", "--out", out]) == 0
    lines = (tmp_path / "runs.jsonl").read_text().splitlines()
    header = json.loads(lines[0])
    assert header["master_seed"] == 123  # ARW_SEED fallback
    assert len(lines) == 3
    rec = RunRecord.from_json(lines[1])
    assert rec.exit + rec.frozen == 2


def test_carpet_budget_exit_4(tmp_path):
    out = str(tmp_path / "b.jsonl")
    assert cli.main(["carpet", "--lambda", "0.5", "--a", "3", "--n", "4",
                     "--seed", "1", "--max-topplings", "2", "--out", out]) == 4


def test_property_violation_exit_3(monkeypatch, tmp_path):
    def boom(*a, **kw):
        raise PropertyViolationError("synthetic violation", {})
    monkeypatch.setattr(cli, "run_carpet_hole", boom)
    out = str(tmp_path / "v.jsonl")
    assert cli.main(["carpet", "--lambda", "0.5", "--a", "3", "--n", "4",
                     "--seed", "1", "--out", out]) == 3


def test_sweep_writes_grid(tmp_path):
    out = str(tmp_path / "swp")
    assert cli.main(["sweep", "--lambda", "0.5", "--zeta", "0.2,0.8",
                     "--L", "30", "--k", "3", "--trials", "10",
                     "--seed", "4", "--out", out]) == 0
    grid = (tmp_path / "swp.grid.csv").read_text().splitlines()
    assert grid[4] == "lam,zeta,p_active,se_p_active"
    assert len(grid) == 5 + 2
    assert (tmp_path / "swp.summary.csv").exists()
    assert (tmp_path / "swp.trials.jsonl").exists()


def test_verify_quick_under_two_minutes(capsys):
    import time
    t0 = time.perf_counter()
    assert cli.main(["verify", "--quick"]) == 0
    elapsed = time.perf_counter() - t0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 11
    assert "11/11 criteria passed" in out
    assert elapsed < 120


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
