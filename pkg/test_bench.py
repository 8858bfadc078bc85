#!/usr/bin/env python3
"""
Tests for the bench commands and the CLI: exit codes, plan / MPC results on
models with known answers, the bound audit and manifest replay.
"""

import json

import numpy as np
import pandas as pd
import pytest

import bench
import cli
from bab import PlannerConfig
from bench import (
    audit_objective_args,
    cmd_audit_bounds,
    cmd_compare,
    cmd_mpc,
    cmd_plan,
    cmd_synth,
    replay,
    run_command,
    strip_timing,
)
from conftest import shift_model, shift_scenario
from errors import BudgetError
from model_io import load_model, save_model, save_scenario, step_costs
from search import SearcherConfig


def quick_config(**overrides):
    values = dict(batch_size=4, max_iterations=6, seed=0,
                  searcher=SearcherConfig(samples=200, iterations=5, agents=2))
    values.update(overrides)
    return PlannerConfig(**values)


@pytest.fixture
def problem_files(tmp_path):
    sc_path, model_path = tmp_path / "scenario.json", tmp_path / "model.json"
    save_scenario(shift_scenario([0.0, 0.0], [0.3, 0.2], horizon=1), sc_path)
    save_model(shift_model(), model_path)
    return str(sc_path), str(model_path)


# --------------------------
# Exit codes
# --------------------------

def test_zero_budget_is_a_usage_error(tmp_path):
    with pytest.raises(BudgetError):
        cmd_synth(1, budget=0)
    assert cli.main(["--out", str(tmp_path), "synth", "--d", "1", "--budget", "0"]) == 2


def test_malformed_scenario_is_a_usage_error(tmp_path, problem_files):
    _, model_path = problem_files
    bad = tmp_path / "broken.json"
    bad.write_text("{not json")
    code = cli.main(["--out", str(tmp_path / "run"), "plan", "--scenario", str(bad), "--model", model_path])
    assert code == 2


def test_failed_plan_still_writes_a_manifest(tmp_path, problem_files, monkeypatch):
    scenario, model = problem_files

    def failing_plan(*args, **kwargs):
        return {"trace": pd.DataFrame(columns=["step", "goal_distance"]),
                "solution": {"message": "budget exhausted"}, "success": False}

    monkeypatch.setattr(bench, "cmd_plan", failing_plan)
    code = cli.main(["--out", str(tmp_path), "plan", "--scenario", scenario, "--model", model, "--method", "rrt"])
    assert code == 1
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "failed"
    assert manifest["error"] == "budget exhausted"
    assert manifest["model_digest"] == shift_model().digest
    assert set(manifest["outputs"]) == {"trace", "solution"}


def test_synth_run_prints_a_summary(tmp_path, capsys):
    code = cli.main(["--out", str(tmp_path), "synth", "--d", "1", "--method", "cem", "--budget", "200"])
    assert code == 0
    printed = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert printed["command"] == "synth"
    assert (tmp_path / "synth.csv").exists()
    assert (tmp_path / "manifest.json").exists()
    assert json.loads((tmp_path / "manifest.json").read_text())["status"] == "ok"


def test_gen_model_writes_a_loadable_file(tmp_path):
    assert cli.main(["--out", str(tmp_path), "gen-model", "--seed", "1", "--widths", "4", "8", "2"]) == 0
    model = load_model(tmp_path / "model.json")
    assert model.widths == [4, 8, 2]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["model_digest"] == model.digest


# --------------------------
# plan + mpc
# --------------------------

def test_plan_at_target_returns_zero_actions(identity_model, at_target):
    out = cmd_plan(at_target, identity_model, config=quick_config())
    assert out["success"]
    assert out["solution"]["uf"] == 0.0
    assert out["solution"]["u"] == [0.0, 0.0]
    assert list(out["trace"].columns)[:2] == ["iter", "uf"]


def test_mpc_reaches_a_reachable_target(identity_model):
    sc = shift_scenario([0.0, 0.0], [0.3, 0.2], horizon=2)
    res = cmd_mpc(sc, identity_model, config=quick_config())
    assert len(res["trace"]) == 2
    assert res["trace"]["replanned"].all()
    assert res["trace"]["goal_distance"].iloc[-1] < 0.05


def test_full_period_mpc_matches_the_open_loop_plan(identity_model):
    sc = shift_scenario([0.0, 0.0], [0.3, 0.2], horizon=2)
    cfg = quick_config(seed=2)
    res = cmd_mpc(sc, identity_model, config=cfg, replan_period=2)
    open_loop = cmd_plan(sc, identity_model, config=cfg)["solution"]
    expected = step_costs(identity_model, sc, "tracking", np.asarray(open_loop["u"]))
    assert res["trace"]["replanned"].tolist() == [True, False]
    assert np.allclose(res["trace"]["cost"].to_numpy(), expected, rtol=0, atol=1e-9)


def test_reference_tracking_replans_every_step(identity_model):
    sc = shift_scenario([0.0, 0.0], [0.3, 0.2], horizon=3)
    res = cmd_mpc(sc, identity_model, config=quick_config(), tracking="reference")
    assert res["trace"]["step"].tolist() == [1, 2, 3]
    assert res["trace"]["replanned"].all()
    assert np.isfinite(res["total_cost"])


# --------------------------
# audit-bounds
# --------------------------

def test_audit_passes_on_the_real_bounds():
    report = cmd_audit_bounds(trials=4, seed=0, samples=200)
    assert report["passed"]
    assert all(c["checks"] > 0 for c in report["checks"].values())


def test_audit_catches_collapsed_bounds():
    report = cmd_audit_bounds(trials=20, seed=0, samples=200, corrupt=True)
    assert report["corrupted"]
    assert not report["passed"]


def test_audit_objectives_reach_four_relu_layers_and_width_32():
    shapes = [audit_objective_args(0, t) for t in range(300)]
    assert max(s["depth"] for s in shapes) == 4
    assert max(s["width"] for s in shapes) == 32
    assert all(1 <= s["d"] <= 4 and 1 <= s["depth"] <= 4 and 2 <= s["width"] <= 32 for s in shapes)


# --------------------------
# compare + replay
# --------------------------

def test_compare_writes_one_row_per_run():
    table = cmd_compare(["cem", "mppi"], [0, 1], d=1, budget=100)
    assert len(table) == 4
    assert set(table["method"]) == {"cem", "mppi"}


def test_replay_reproduces_synth_results(tmp_path):
    args = {"d": 2, "method": "cem", "budget": 300, "seed": 3}
    run_command("synth", args, str(tmp_path / "first"))
    replay(str(tmp_path / "first" / "manifest.json"), str(tmp_path / "second"))
    a = pd.read_csv(tmp_path / "first" / "synth.csv")
    b = pd.read_csv(tmp_path / "second" / "synth.csv")
    pd.testing.assert_frame_equal(strip_timing(a), strip_timing(b))


def test_replay_reproduces_a_plan_trace(tmp_path, problem_files):
    scenario, model = problem_files
    args = {"scenario": scenario, "model": model, "method": "babnd", "seed": 0,
            "overrides": {"max_iterations": 3, "batch_size": 2, "seed": 0}}
    first, manifest = run_command("plan", args, str(tmp_path / "first"))
    second, _ = replay(str(tmp_path / "first" / "manifest.json"), str(tmp_path / "second"))
    assert manifest.model_digest == shift_model().digest
    assert first["u"] == second["u"]
    a = pd.read_csv(tmp_path / "first" / "trace.csv")
    b = pd.read_csv(tmp_path / "second" / "trace.csv")
    pd.testing.assert_frame_equal(strip_timing(a), strip_timing(b))


# --------------------------
# synthetic benchmark
# --------------------------

@pytest.mark.parametrize("method", ["babnd", "cem", "mppi", "gd"])
def test_synth_runs_stay_within_budget(method):
    for budget in (200, 1003):
        assert cmd_synth(5, method, budget, seed=1)["samples"] <= budget


def test_synthetic_d50_babnd_beats_the_samplers():
    wins = 0
    for seed in range(10):
        bab = cmd_synth(50, "babnd", 20000, seed)
        cem = cmd_synth(50, "cem", 20000, seed)
        mppi = cmd_synth(50, "mppi", 20000, seed)
        assert bab["samples"] <= 20000
        assert bab["wall_ms"] < 60_000
        if bab["gap"] <= 1.0 and bab["gap"] < cem["gap"] and bab["gap"] < mppi["gap"]:
            wins += 1
    assert wins >= 8


def test_synthetic_median_gaps_with_dimension():
    for d in (10, 50, 100):
        table = cmd_compare(["babnd", "cem", "mppi"], list(range(10)), d=d, budget=20000)
        medians = table.groupby("method")["gap"].median()
        assert medians["babnd"] <= medians["cem"] + 1e-9
        assert medians["babnd"] <= medians["mppi"] + 1e-9
        assert (table["samples"] <= 20000).all()
