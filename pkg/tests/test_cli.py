import subprocess
import sys

import pytest

from oymb import envs
from oymb.cli import main

RUN_CFG = """[experiment]
task = robo_easy
episodes = 3
runs = 2
batch_size = 16
"""


@pytest.fixture
def run_cfg(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(RUN_CFG)
    return path


def test_validate_default_map(capsys):
    assert main(["validate-map"]) == 0
    out = capsys.readouterr().out
    maze = envs.load_map()
    dist = envs.bfs_distances(maze.walls, maze.start)
    for name, cell in maze.goals.items():
        assert f"{name} goal {cell}: BFS distance {dist[cell]}" in out


def test_validate_bad_map(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("S\n")
    assert main(["validate-map", "--map", str(bad)]) == 1
    assert "row" in capsys.readouterr().err


def test_run_missing_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.ini")]) == 1
    assert "not found" in capsys.readouterr().err


def test_run_invalid_config(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[experiment]\ntask = robo_easy\nruns = 0\n")
    assert main(["run", "--config", str(path)]) == 1


@pytest.mark.parametrize("argv", [[], ["run"], ["run", "--config", "x", "--bogus"], ["fly"],
                                  ["run", "--config", "x", "--seed", "abc"]])
def test_usage_errors(argv, capsys):
    assert main(argv) == 1
    assert capsys.readouterr().err


def test_help(capsys):
    assert main(["run", "--help"]) == 0
    out = capsys.readouterr().out
    for key in ("episodes", "batch_size", "gamma", "lambda", "her_terminal", "[reported]", "[chosen"):
        assert key in out


def test_runtime_failure(run_cfg, tmp_path, monkeypatch):
    from oymb import harness

    def boom(*a, **k):
        raise harness.RunError("simulated")
    monkeypatch.setattr(harness, "run_experiment", boom)
    assert main(["run", "--config", str(run_cfg), "--out", str(tmp_path / "o")]) == 2


def test_probe_then_run_distinct_files(run_cfg, tmp_path):
    probe = tmp_path / "probe.ini"
    probe.write_text("[probe]\nepisodes = 3\ndraws = 5\nprobe_batch_size = 100\nschedule = 0:0.04, 2:0.1\nbatch_size = 16\n")
    out = tmp_path / "out"
    assert main(["probe", "--config", str(probe), "--out", str(out)]) == 0
    assert main(["run", "--config", str(run_cfg), "--out", str(out)]) == 0
    names = sorted(p.name for p in out.glob("*.csv"))
    assert names == ["probe_oymb.csv", "probe_uniform.csv", "run_her.csv", "run_her_oymb.csv"]


def test_seed_override_and_determinism(run_cfg, tmp_path):
    for d in ("a", "b", "c"):
        seed = "3" if d != "c" else "4"
        assert main(["run", "--config", str(run_cfg), "--out", str(tmp_path / d), "--seed", seed]) == 0
    a = (tmp_path / "a" / "run_her_oymb.csv").read_bytes()
    assert a == (tmp_path / "b" / "run_her_oymb.csv").read_bytes()
    assert (tmp_path / "a" / "runs" / "her_oymb_seed3.csv").exists()
    assert (tmp_path / "c" / "runs" / "her_oymb_seed4.csv").exists()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "oymb", "validate-map"], capture_output=True, text=True)
    assert proc.returncode == 0 and "easy goal" in proc.stdout
