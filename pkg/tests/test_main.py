import numpy as np
import pandas as pd
import pytest

from main import EXIT_OK, EXIT_UNDECIDED, EXIT_USAGE, run
from spec_io import load_problem
from tests.conftest import fixture_path

NET = fixture_path("example_net.json")
VALID = fixture_path("valid.vnnlib")
INVALID = fixture_path("invalid.vnnlib")


def witness_from(lines):
    return np.array([float(line.split("=", 1)[1]) for line in lines])


def test_verify_valid(capsys):
    assert run(["verify", "--net", NET, "--prop", VALID]) == EXIT_OK
    assert capsys.readouterr().out.splitlines() == ["unsat"]


def test_verify_invalid_prints_witness(capsys):
    assert run(["verify", "--net", NET, "--prop", INVALID]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "sat"
    assert [line.split(" = ")[0] for line in lines[1:]] == ["X_0", "X_1"]
    assert load_problem(NET, INVALID).is_counterexample(witness_from(lines[1:]))


def test_verify_with_oracle_trace_and_stats(tmp_path, capsys):
    stats = tmp_path / "stats.txt"
    code = run(["verify", "--net", NET, "--prop", VALID, "--no-attack", "--oracle", "--trace",
                "--mode", "no-restart", "--abstraction", "interval", "--stats", str(stats)])
    assert code == EXIT_OK
    captured = capsys.readouterr()
    assert captured.out.splitlines() == ["unsat"]
    assert captured.err.splitlines()[0].startswith("#1")
    values = dict(line.split("=", 1) for line in stats.read_text().splitlines())
    assert int(values["iterations"]) >= 1


def test_stats_as_csv(tmp_path):
    stats = tmp_path / "stats.csv"
    assert run(["verify", "--net", NET, "--prop", VALID, "--split", "2", "--stats", str(stats)]) == EXIT_OK
    frame = pd.read_csv(stats)
    assert list(frame.columns[:3]) == ["iterations", "decisions", "learned_clauses"]


def test_timeout_exit_code(capsys):
    assert run(["verify", "--net", NET, "--prop", VALID, "--no-attack", "--timeout", "1e-9"]) == EXIT_UNDECIDED
    assert capsys.readouterr().out.splitlines() == ["timeout"]


def test_falsify(capsys):
    assert run(["falsify", "--net", NET, "--prop", INVALID, "--seed", "1"]) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[0] == "sat"
    assert run(["falsify", "--net", NET, "--prop", VALID]) == EXIT_UNDECIDED
    assert capsys.readouterr().out.splitlines() == ["unknown"]


def test_oracle_command(capsys):
    assert run(["oracle", "--net", NET, "--prop", VALID]) == EXIT_OK
    assert capsys.readouterr().out.splitlines() == ["unsat"]


@pytest.mark.parametrize("argv", [
    ["verify", "--net", "missing.json", "--prop", VALID],
    ["verify", "--net", NET],
    ["verify", "--net", NET, "--prop", VALID, "--split", "0"],
    ["verify", "--net", NET, "--prop", VALID, "--mode", "bogus"],
    ["explode"],
])
def test_usage_errors(argv, capsys):
    assert run(argv) == EXIT_USAGE
    assert capsys.readouterr().err


def test_parse_error_exit_code(tmp_path, capsys):
    prop = tmp_path / "broken.vnnlib"
    prop.write_text("(declare-const X_0 Real)\n(assert (>= X_0\n")
    assert run(["verify", "--net", NET, "--prop", str(prop)]) == EXIT_USAGE
    assert "line" in capsys.readouterr().err


def test_ablate_and_runs(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr("database.RESULTS_DATABASE_URL", f"sqlite:///{tmp_path / 'runs.db'}")
    csv = tmp_path / "ablation.csv"
    assert run(["ablate", "--count", "2", "--budget", "5", "--csv", str(csv), "--suite", "cli"]) == EXIT_OK
    assert len(pd.read_csv(csv)) == 6
    capsys.readouterr()

    assert run(["runs", "--suite", "cli"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "Summary by mode" in out
    assert "no-learning" in out
