import csv
import math

import pytest

import cleval


def test_window_tracker_matches_brute_force():
    trace = [0.9, 0.4, 0.8, 0.85, 0.2, 0.6, 0.95]
    for w in (2, 3, 10):
        tracker = cleval.WindowTracker(w)
        for a in trace:
            tracker.push(a)
        wf, wp = cleval.oracle_wf_wp(trace, w)
        assert tracker.wf == pytest.approx(wf, abs=1e-15)
        assert tracker.wp == pytest.approx(wp, abs=1e-15)


def test_wc_acc_first_task_is_current_accuracy():
    assert cleval.wc_acc(0.7, None, 1) == 0.7
    assert cleval.wc_acc(0.8, 0.2, 4) == pytest.approx(0.25 * 0.8 + 0.75 * 0.2)


def test_gem_projection_is_feasible():
    g = [1.0, -2.0, 0.5]
    task_grads = [[0.0, 1.0, 0.0], [1.0, 1.0, 1.0]]
    projected, violated = cleval.gem_project(g, task_grads)
    assert violated
    for tg in task_grads:
        assert sum(a * b for a, b in zip(projected, tg)) >= -1e-10
    unchanged, violated = cleval.gem_project([0.0, 1.0, 0.0], task_grads)
    assert not violated
    assert unchanged == [0.0, 1.0, 0.0]


def test_parse_config_reports_line_numbers():
    text, warnings = cleval.parse_config("method = er\nalpha = 0.3\n")
    assert "method = er" in text
    assert warnings == []
    with pytest.raises(cleval.ClevalError, match="line 2"):
        cleval.parse_config("method = er\nalpha = 1.5\n")


def test_oracle_suites_pass():
    for suite in cleval.oracle_check(3):
        assert suite["passed"], suite


def test_small_experiment_writes_outputs(tmp_path):
    cfg = "\n".join([
        "method = er",
        "alpha = 0.3",
        "hidden = 32",
        "n_tasks = 2",
        "synthetic_classes = 4",
        "synthetic_train_per_class = 200",
        "synthetic_eval_per_class = 200",
        "iters_per_task = 40",
        "batch_size = 32",
        "rho_eval = 4",
        "eval_subsample = 100",
        "seeds = 0, 1",
        "output_dir = smoke",
    ])
    result = cleval.run_experiment(cfg, str(tmp_path))
    assert [r["error"] for r in result["runs"]] == [None, None]
    assert len(result["plots"]) == 2
    with open(tmp_path / "smoke" / "final.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["run_seed"] for r in rows] == ["0", "1", "mean", "sd"]
    accs = [float(r["acc"]) for r in rows[:2]]
    assert float(rows[2]["acc"]) == pytest.approx(sum(accs) / 2)
    for run in result["runs"]:
        last = run["boundaries"][-1]
        assert last["wc_acc"] <= last["acc"] + 1e-12
        assert not math.isnan(last["acc"])
