"""Command-line interface: exit codes, CSV contracts, determinism."""

import csv
import os

import numpy as np
import pytest

from foldfinder import build_grid, make_model, phi, stability_index
from foldfinder.cli import (EXIT_INVALID_MODEL, EXIT_NO_CONVERGENCE, EXIT_OK,
                            EXIT_USAGE, main, read_solution_csv)


def run(args):
    return main(args)


def test_solve_exit_zero_and_row_count(tmp_path, capsys):
    out = tmp_path / "sol.csv"
    code = run(["solve", "--model", "abc", "--q", "1.5", "--gamma", "4",
                "--grid", "interval:127", "--lambda", "1.0",
                "-o", str(out)])
    assert code == EXIT_OK
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["x", "u_1"]
    assert len(rows) == 128
    summary = capsys.readouterr().out
    assert "lambda=1" in summary and "delta=" in summary


def test_solve_invalid_model_reports_growth_condition(capsys):
    code = run(["solve", "--model", "abc", "--q", "1.5", "--gamma", "3",
                "--grid", "interval:15", "--lambda", "1.0"])
    assert code == EXIT_INVALID_MODEL
    assert "(g3)" in capsys.readouterr().out


def test_solve_above_bound_nonexistence(capsys):
    code = run(["solve", "--model", "abc", "--q", "1.5", "--gamma", "4",
                "--grid", "interval:15", "--lambda", "100"])
    assert code == EXIT_NO_CONVERGENCE


def test_fold_one_node_closed_form(tmp_path, capsys):
    out = tmp_path / "fold.csv"
    code = run(["fold", "--model", "abc", "--q", "1.5", "--gamma", "4",
                "--grid", "interval:1", "-o", str(out)])
    assert code == EXIT_OK
    lam_star = 8.0 * 1.6 ** 0.25 - 1.6 ** 1.25
    summary = capsys.readouterr().out
    value = float(summary.split("lambda_star=")[1].split()[0])
    assert value == pytest.approx(lam_star, abs=1e-9)
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["x", "u_1", "v_1"]
    assert float(rows[1][1]) == pytest.approx(np.sqrt(1.6), abs=1e-9)


def test_fold_zero_model_exit_two(capsys):
    code = run(["fold", "--model", "zero", "--q", "1.5",
                "--grid", "interval:15"])
    assert code == EXIT_NO_CONVERGENCE


def test_continue_branch_csv(tmp_path):
    out = tmp_path / "branch.csv"
    code = run(["continue", "--model", "abc", "--q", "1.5", "--gamma", "4",
                "--grid", "interval:15", "--lambda-start", "1.0",
                "-o", str(out)])
    assert code == EXIT_OK
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["lambda", "sup_norm", "energy", "delta",
                       "corrector_iters"]
    lams = [float(r[0]) for r in rows[1:]]
    deltas = [float(r[3]) for r in rows[1:]]
    flip = next(i for i, d in enumerate(deltas) if d <= 0)
    # monotone increase along the stable branch, then the fold bracket
    assert all(b > a for a, b in zip(lams[:flip], lams[1:flip + 1]))
    assert any(d <= 0 for d in deltas)


def test_continue_empty_range_usage_error(capsys):
    code = run(["continue", "--model", "abc", "--q", "1.5", "--gamma", "4",
                "--grid", "interval:15", "--lambda-start", "2.0",
                "--lambda-end", "1.0"])
    assert code == EXIT_USAGE


def test_unknown_flag_usage_error():
    assert run(["solve", "--frobnicate", "1"]) == EXIT_USAGE
    assert run(["definitely-not-a-command"]) == EXIT_USAGE
    assert run([]) == EXIT_USAGE


def test_bench_matrix(tmp_path):
    out = tmp_path / "bench.csv"
    code = run(["bench", "--model", "abc", "--q", "1.5", "--gamma", "4",
                "--grids", "7,15", "--methods", "direct", "-o", str(out)])
    assert code == EXIT_OK
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["method", "grid_n", "lambda_star", "wall_seconds",
                       "linear_solves"]
    assert [r[:2] for r in rows[1:]] == [["direct", "7"], ["direct", "15"]]
    assert all(int(r[4]) > 0 for r in rows[1:])


def test_bench_threaded_same_rows(tmp_path):
    out = tmp_path / "bench2.csv"
    os.environ["FOLDFINDER_THREADS"] = "2"
    try:
        code = run(["bench", "--model", "abc", "--q", "1.5", "--gamma", "4",
                    "--grids", "7,15", "--methods", "direct", "-o", str(out)])
    finally:
        del os.environ["FOLDFINDER_THREADS"]
    assert code == EXIT_OK
    rows = list(csv.reader(open(out)))
    # deterministic ordering and identical fold values under fan-out
    assert [r[:2] for r in rows[1:]] == [["direct", "7"], ["direct", "15"]]


def test_check_command(capsys):
    code = run(["check", "--model", "coupled", "--q", "1.5",
                "--grid", "interval:7"])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "all checks passed" in out
    assert run(["check", "--model", "abc", "--q", "2.5", "--gamma", "4",
                "--grid", "interval:7"]) == EXIT_INVALID_MODEL


def test_config_file_flags_win(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("model = abc\nq = 1.5\ngamma = 4\n"
                   "grid = interval:15\nlambda = 2.0  # comment\n")
    code = run(["solve", "--config", str(cfg), "--lambda", "1.0"])
    assert code == EXIT_OK
    assert "lambda=1 " in capsys.readouterr().out


def test_config_unknown_key_rejected(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("model = abc\nbogus = 1\n")
    assert run(["solve", "--config", str(cfg), "--lambda", "1"]) == EXIT_USAGE


def test_deterministic_rerun_bytes(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["solve", "--model", "abc", "--q", "1.5", "--gamma", "4",
            "--grid", "interval:31", "--lambda", "2.0", "--seed", "3"]
    assert run(args + ["-o", str(a)]) == EXIT_OK
    assert run(args + ["-o", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_solution_csv_round_trip(tmp_path, capsys):
    out = tmp_path / "sol.csv"
    args = ["solve", "--model", "abc", "--q", "1.5", "--gamma", "4",
            "--grid", "interval:15", "--lambda", "2.0", "-o", str(out)]
    assert run(args) == EXIT_OK
    summary = capsys.readouterr().out
    phi_reported = float(summary.split("phi=")[1].split()[0])
    delta_reported = float(summary.split("delta=")[1].split()[0])
    grid = build_grid("interval", 15)
    spec = make_model("abc", q=1.5, gamma=4.0)
    state = read_solution_csv(str(out), grid, spec)
    assert phi(state, 2.0) == pytest.approx(phi_reported, abs=1e-12)
    assert stability_index(state).delta == pytest.approx(delta_reported,
                                                         abs=1e-12)
