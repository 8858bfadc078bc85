#!/usr/bin/env python3
"""
Tests for linear bound propagation: ReLU relaxation, early stop, concretization and
the three bounding modes.
"""

import itertools

import numpy as np
import pytest

from crown import (
    ACTIVE,
    INACTIVE,
    UNSTABLE,
    LinearBounds,
    PreactBounds,
    backward_propagate,
    concretize,
    lower_bound,
    relax_relu,
    relax_squared_distance,
    stop_set,
    watch_nodes,
)
from errors import BoundError
from graph_core import BoxDomain, interval_forward
from model_io import random_objective
from search import SearcherConfig, search

SOUND = ("full-crown", "early-stop+interval")


def grid_points(box: BoxDomain, n: int = 200) -> np.ndarray:
    axes = [np.linspace(lo, hi, n) for lo, hi in zip(box.lower, box.upper)]
    return np.array(list(itertools.product(*axes)))


@pytest.mark.parametrize("policy", ["adaptive", "zero", "one", 0.3])
def test_relu_relaxation_sandwich(policy):
    rng = np.random.default_rng(0)
    lo = rng.normal(0.0, 1.0, 500)
    hi = lo + rng.exponential(1.0, 500)
    r = relax_relu(lo, hi, policy)
    z = lo[:, None] + (hi - lo)[:, None] * rng.uniform(size=(500, 100))
    relu = np.maximum(z, 0.0)
    assert np.all(r.lower_slope[:, None] * z + r.lower_offset[:, None] <= relu + 1e-12)
    assert np.all(relu <= r.upper_slope[:, None] * z + r.upper_offset[:, None] + 1e-12)


def test_relu_relaxation_cases():
    r = relax_relu(np.array([0.5, -2.0, -1.0, -1.0]), np.array([1.0, -0.5, 3.0, 0.5]))
    assert r.cases.tolist() == [ACTIVE, INACTIVE, UNSTABLE, UNSTABLE]
    assert r.upper_slope[2] == pytest.approx(0.75)
    assert r.upper_offset[2] == pytest.approx(0.75)
    # adaptive slope: 1 when u >= |l|, else 0
    assert r.lower_slope[2:].tolist() == [1.0, 0.0]


def test_relu_relaxation_rejects_bad_input():
    with pytest.raises(BoundError):
        relax_relu(np.array([1.0]), np.array([0.0]))
    with pytest.raises(BoundError):
        relax_relu(np.array([-1.0]), np.array([1.0]), 1.5)


def test_squared_distance_relaxation_sandwich():
    rng = np.random.default_rng(1)
    lo = rng.normal(size=3)
    hi = lo + rng.exponential(size=3)
    t = rng.normal(size=3)
    w = rng.uniform(0.1, 2.0, 3)
    ls, li, us, ui = relax_squared_distance(lo, hi, t, w)
    X = lo + (hi - lo) * rng.uniform(size=(1000, 3))
    f = (w * (X - t) ** 2).sum(axis=1)
    assert np.all(X @ ls + li <= f + 1e-12)
    assert np.all(f <= X @ us + ui + 1e-12)


def test_concretize_linear_form():
    lb = LinearBounds(start=3, coeffs={0: np.array([[1.0, -2.0]])}, offset=np.array([0.5]))
    out = concretize(lb, {0: (np.zeros(2), np.ones(2))})
    assert out[0] == pytest.approx(-1.5)
    with pytest.raises(BoundError):
        concretize(lb, {})


def test_affine_objectives_are_bounded_exactly():
    for seed in range(10):
        graph, box = random_objective(seed, d=3, depth=2, width=6, head="affine")
        vertices = np.array(list(itertools.product(*zip(box.lower, box.upper))))
        true_min = graph.evaluate(vertices, exact=True).values.min()
        for mode in SOUND:
            lf = lower_bound(graph, box, mode=mode).lf
            assert abs(lf - true_min) <= 1e-9 * max(1.0, abs(true_min))


@pytest.mark.parametrize("head", ["linear", "tracking"])
def test_sound_modes_never_exceed_grid_minimum(head):
    for seed in range(8):
        graph, box = random_objective(100 + seed, d=2, depth=3, width=8, head=head)
        f_min = graph.values(grid_points(box)).min()
        for mode in SOUND:
            result = lower_bound(graph, box, mode=mode)
            assert result.sound
            assert result.lf <= f_min + 1e-9


def test_deep_wide_networks_stay_sound():
    for seed in range(4):
        graph, box = random_objective(400 + seed, d=2, depth=4, width=32, head=("linear", "tracking")[seed % 2])
        f_min = graph.values(grid_points(box, 150)).min()
        for mode in SOUND:
            result = lower_bound(graph, box, mode=mode)
            assert result.lf <= f_min + 1e-9 * max(1.0, abs(f_min))


def test_full_crown_point_attains_the_bound_on_affine_objectives():
    for seed in range(5):
        graph, box = random_objective(seed, d=3, depth=2, width=6, head="affine")
        result = lower_bound(graph, box, mode="full-crown")
        assert result.argmin is not None
        assert box.contains(result.argmin)
        value = graph.values(result.argmin[None, :])[0]
        assert abs(value - result.lf) <= 1e-9 * max(1.0, abs(value))


def test_bounds_on_subboxes_stay_sound():
    graph, root = random_objective(5, d=2, depth=2, width=10, head="tracking")
    lo_box, up_box = root.bisect(0)
    for box in (lo_box, up_box, lo_box.bisect(1)[1]):
        f_min = graph.values(grid_points(box, 120)).min()
        for mode in SOUND:
            assert lower_bound(graph, box, mode=mode).lf <= f_min + 1e-9


def test_empirical_bound_is_below_recorded_samples():
    for seed in range(10):
        graph, box = random_objective(200 + seed, d=3, depth=2, width=8, head="tracking")
        watch = watch_nodes(graph, "early-stop+empirical")
        assert watch
        rep = search(graph, box, SearcherConfig(samples=64, iterations=3, agents=2), watch=watch, seed=seed)
        result = lower_bound(graph, box, mode="early-stop+empirical", records=rep.activations,
                             sample_count=rep.samples)
        assert not result.sound
        assert result.lf <= rep.uf + 1e-9 * max(1.0, abs(rep.uf))


def test_early_stop_anchors_on_last_relu():
    graph, box = random_objective(9, d=2, depth=3, width=4, head="linear")
    stop = stop_set(graph, "last-relu")
    relus = graph.nodes_of_kind("relu")
    assert stop == (relus[-1],)
    preact = PreactBounds.from_intervals(interval_forward(graph, box))
    lb = backward_propagate(graph, preact, stop_set=stop)
    assert lb.anchors == [relus[-1]]
    assert stop_set(graph, "none") == ()


def test_propagation_errors():
    graph, box = random_objective(2, d=2, depth=1, width=3, head="linear")
    with pytest.raises(BoundError):
        backward_propagate(graph, PreactBounds())
    relu = graph.nodes_of_kind("relu")[0]
    with pytest.raises(BoundError):
        backward_propagate(graph, PreactBounds(), start=relu, stop_set=[graph.output])
    with pytest.raises(BoundError):
        lower_bound(graph, box, mode="magic")
    with pytest.raises(BoundError):
        stop_set(graph, "every-other")


def test_preact_bounds_reject_inverted_pairs():
    pb = PreactBounds()
    with pytest.raises(BoundError):
        pb.set(0, np.array([1.0]), np.array([0.0]), "interval")
    pb.set(0, np.array([0.0]), np.array([1.0]), "empirical", count=5)
    assert not pb.is_sound
    assert pb.sample_counts[0] == 5
