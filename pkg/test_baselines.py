#!/usr/bin/env python3
"""
Tests for the RRT / PRM baselines and the plain sampler harness.
"""

import networkx as nx
import numpy as np

from baselines import (
    astar_path,
    path_cost,
    penalty_batch,
    prm_build,
    prm_plan,
    rrt_plan,
    sampler_plan,
)
from conftest import shift_model, shift_scenario
from graph_core import BoxDomain
from model_io import ObjectiveSpec, build_objective, step_dynamics


def replays(model, scenario, path) -> bool:
    for i in range(path.length):
        x = step_dynamics(model, path.states[i], path.positions[i], path.actions[i], scenario.features)[0]
        if not np.allclose(x, path.predicted[i], rtol=0, atol=1e-9):
            return False
    return True


# --------------------------
# RRT
# --------------------------

def test_rrt_reaches_a_one_step_goal():
    model = shift_model()
    sc = shift_scenario([0.0, 0.0], [0.3, -0.2], bound=0.5)
    path = rrt_plan(model, sc, "tracking", goal_bias=1.0, n_actions=4000, seed=0)
    assert path.success
    assert path.length == 1
    assert path.goal_distance <= sc.goal_threshold
    assert replays(model, sc, path)


def test_rrt_reports_failure_when_goal_is_out_of_reach():
    model = shift_model()
    sc = shift_scenario([0.0, 0.0], [5.0, 5.0], bound=0.5)
    path = rrt_plan(model, sc, "tracking", max_nodes=10, n_actions=50, seed=0)
    assert not path.success
    assert path.message == "budget exhausted"
    assert path.expanded <= 11


def test_rrt_paths_replay_and_avoid_obstacles():
    model = shift_model()
    sc = shift_scenario([0.0, 0.0], [0.6, 0.0], bound=0.15, p0=[-0.5, -0.5],
                        obstacles=[{"center": [0.3, 0.0], "size": 0.1}])
    space = BoxDomain(np.array([-0.2, -0.4]), np.array([0.8, 0.4]))
    path = rrt_plan(model, sc, "tracking_obstacles", max_nodes=2000, n_actions=200, state_space=space, seed=4)
    assert path.success
    assert np.array_equal(path.predicted, path.states[1:])
    assert replays(model, sc, path)
    assert np.all(penalty_batch(sc, "tracking_obstacles", path.states, path.positions) == 0)
    again = rrt_plan(model, sc, "tracking_obstacles", max_nodes=2000, n_actions=200, state_space=space, seed=4)
    assert np.array_equal(path.states, again.states)


# --------------------------
# PRM
# --------------------------

def test_prm_identical_nodes_connect_both_ways():
    model = shift_model()
    sc = shift_scenario([0.0, 0.0], [0.1, 0.1])
    X = np.array([[0.2, 0.1], [0.2, 0.1]])
    P = np.array([[0.0, 0.5], [0.0, 0.5]])
    roadmap = prm_build(model, sc, 2, threshold=0.01, samples=(X, P))
    assert sorted(roadmap.graph.edges) == [(0, 1), (1, 0)]
    assert roadmap.node_count == 2 and roadmap.edge_count == 2


def test_prm_zero_threshold_keeps_exact_matches_only():
    model = shift_model()
    sc = shift_scenario([0.0, 0.0], [0.1, 0.1])
    P = np.array([[0.0, 0.0], [0.25, 0.5], [0.5, 0.25], [0.3, 0.3]])
    X = P + np.array([0.5, 0.5])
    X[3] = [0.1, 0.2]
    roadmap = prm_build(model, sc, 4, threshold=0.0, samples=(X, P))
    assert roadmap.edge_count == 6
    assert all(3 not in edge for edge in roadmap.graph.edges)


def test_prm_edges_match_brute_force():
    model = shift_model()
    sc = shift_scenario([0.0, 0.0], [0.4, 0.4])
    roadmap = prm_build(model, sc, 40, threshold=0.2, seed=2)
    X = np.array([roadmap.graph.nodes[i]["x"] for i in range(40)])
    P = np.array([roadmap.graph.nodes[i]["p"] for i in range(40)])
    expected = {(i, j) for i in range(40) for j in range(40)
                if i != j and np.linalg.norm(X[i] + (P[j] - P[i]) - X[j]) <= 0.2}
    assert set(roadmap.graph.edges) == expected


def test_prm_single_edge_path_to_adjacent_goal():
    model = shift_model()
    sc = shift_scenario([0.0, 0.0], [0.25, 0.25])
    X = np.array([[0.25, 0.25], [1.0, 1.0]])
    P = np.array([[0.25, 0.25], [-1.0, -1.0]])
    roadmap = prm_build(model, sc, 2, threshold=0.01, samples=(X, P))
    path = prm_plan(roadmap, model, sc, "tracking")
    assert path.success
    assert path.nodes == ["init", 0]
    assert path.goal_distance == 0.0
    assert replays(model, sc, path)


def test_prm_fails_when_every_node_collides():
    model = shift_model()
    sc = shift_scenario([0.0, 0.0], [0.25, 0.25], obstacles=[{"center": [0.0, 0.0], "size": 10.0}])
    roadmap = prm_build(model, sc, 20, seed=0)
    path = prm_plan(roadmap, model, sc, "tracking_obstacles")
    assert not path.success
    assert path.length == 0


def test_prm_paths_are_collision_free_and_replay():
    model = shift_model()
    sc = shift_scenario([0.0, 0.0], [0.5, 0.0], p0=[0.0, 0.0],
                        obstacles=[{"center": [0.25, 0.0], "size": 0.08}])
    roadmap = prm_build(model, sc, 300, threshold=0.15, seed=1)
    path = prm_plan(roadmap, model, sc, "tracking_obstacles")
    if path.success:
        assert replays(model, sc, path)
        assert np.all(penalty_batch(sc, "tracking_obstacles", path.states[1:], path.positions[1:]) == 0)
        assert np.all(penalty_batch(sc, "tracking_obstacles", path.predicted, path.positions[1:]) == 0)


def test_astar_matches_dijkstra():
    model = shift_model()
    sc = shift_scenario([0.0, 0.0], [0.4, 0.4])
    checked = 0
    for seed in range(20):
        G = prm_build(model, sc, 60, threshold=0.25, seed=seed).graph
        rng = np.random.default_rng(seed)
        src = int(rng.integers(60))
        reach = sorted(nx.descendants(G, src))
        if not reach:
            continue
        dst = reach[int(rng.integers(len(reach)))]
        got = path_cost(G, astar_path(G, src, dst))
        assert abs(got - nx.dijkstra_path_length(G, src, dst, weight="weight")) <= 1e-12
        checked += 1
    assert checked > 0


# --------------------------
# Sampler harness
# --------------------------

def test_sampler_plan_scores_the_center(identity_model, at_target):
    graph, _ = build_objective(ObjectiveSpec(at_target, identity_model))
    for kind in ("cem", "mppi", "gd"):
        rep = sampler_plan(graph, kind, seed=0)
        assert rep.uf == 0.0
        assert np.array_equal(rep.best, np.zeros(2))
