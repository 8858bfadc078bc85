#!/usr/bin/env python3
"""
Tests for the CEM / MPPI / GD searchers and the batched per-box driver.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from graph_core import BoxDomain, GraphBuilder
from model_io import build_synthetic, random_objective
from search import SearcherConfig, _finite_difference, batch_search, search, value_and_grad


def bowl(target=(0.3, -0.4)):
    g = GraphBuilder()
    u = g.input(len(target))
    out = g.squared_distance(u, list(target))
    box = BoxDomain.uniform(len(target), -1.0, 1.0)
    return g.build(out, box=box), box


def test_cem_finds_the_bowl_minimum():
    graph, box = bowl()
    rep = search(graph, box, SearcherConfig(kind="cem", samples=200, iterations=15), seed=1)
    assert rep.ok
    assert rep.uf < 1e-3
    assert box.contains(rep.best)
    assert rep.samples == 15 * 4 * 50
    assert len(rep.history) == 15
    assert all(a >= b for a, b in zip(rep.history, rep.history[1:]))


def test_mppi_finds_the_bowl_minimum():
    graph, box = bowl()
    cfg = SearcherConfig(kind="mppi", samples=200, iterations=15, temperature=0.01)
    rep = search(graph, box, cfg, seed=2)
    assert rep.uf < 1e-2


def test_gd_converges_on_the_bowl():
    graph, box = bowl()
    cfg = SearcherConfig(kind="gd", samples=8, iterations=30, step_ratios=[10.0])
    rep = search(graph, box, cfg, seed=3)
    assert rep.uf < 1e-8
    assert np.allclose(rep.best, [0.3, -0.4], atol=1e-4)


def test_gd_on_separable_objective_uses_analytic_gradient():
    obj = build_synthetic(2)
    rep = search(obj, obj.root_box(), SearcherConfig(kind="gd", samples=40, iterations=20,
                                                     step_ratios=[0.05, 0.1]), seed=0)
    assert rep.uf < obj.values(np.zeros(2))[0]


def test_warm_start_caps_the_result():
    graph, box = random_objective(4, d=3, head="tracking")
    warm = np.array([0.1, -0.2, 0.3])
    rep = search(graph, box, SearcherConfig(samples=8, iterations=1, agents=2), warm_start=warm, seed=0)
    assert rep.uf <= graph.values(warm)[0]


def test_same_seed_same_report():
    graph, box = random_objective(6, d=4, head="tracking")
    for kind in ("cem", "mppi", "gd"):
        cfg = SearcherConfig(kind=kind, samples=60, iterations=4, agents=3)
        a = search(graph, box, cfg, seed=5)
        b = search(graph, box, cfg, seed=5)
        assert a.uf == b.uf
        assert np.array_equal(a.best, b.best)
        assert np.array_equal(a.top_values, b.top_values)


def test_top_samples_are_sorted_and_capped():
    graph, box = random_objective(8, d=2, head="linear")
    rep = search(graph, box, SearcherConfig(samples=100, iterations=3, top_k=25), seed=0)
    assert len(rep.top_values) == 25
    assert np.all(np.diff(rep.top_values) >= 0)
    assert rep.top_values[0] == rep.uf
    assert np.all(box.contains(rep.top_inputs))


def test_watched_activation_ranges_cover_best_sample():
    graph, box = random_objective(10, d=2, depth=2, head="tracking")
    relu = graph.nodes_of_kind("relu")[-1]
    rep = search(graph, box, SearcherConfig(samples=50, iterations=2), watch=[relu], seed=0)
    lo, hi = rep.activations[relu]
    act = graph.evaluate(rep.best, watch=[relu]).records[relu][0]
    assert np.all(lo <= act) and np.all(act <= hi)


def test_batch_search_isolates_failures():
    graph, box = random_objective(1, d=2, head="linear")
    wrong = BoxDomain.uniform(3, -1.0, 1.0)
    reports = batch_search(graph, [box, wrong, box.bisect(0)[0]], SearcherConfig(samples=20, iterations=2))
    assert reports[0].ok and reports[2].ok
    assert not reports[1].ok
    assert reports[1].uf == float("inf")
    assert box.bisect(0)[0].contains(reports[2].best)


def test_batch_search_seeds_by_index():
    graph, box = random_objective(1, d=2, head="tracking")
    cfg = SearcherConfig(samples=20, iterations=2, seed=7)
    reports = batch_search(graph, [box, box], cfg)
    alone = search(graph, box, cfg, seed=7 ^ 1)
    assert reports[1].uf == alone.uf


def test_reverse_mode_gradient_matches_finite_differences():
    graph, box = random_objective(12, d=3, depth=2, width=6, head="tracking")
    X = box.sample(np.random.default_rng(0), 5)
    vals, grad = value_and_grad(graph, X, exact=True)
    _, fd = _finite_difference(graph, X, box, exact=True)
    assert np.allclose(vals, graph.values(X))
    assert np.allclose(grad, fd, atol=1e-4)


def test_config_validation_and_presets():
    with pytest.raises(ValidationError):
        SearcherConfig(samples=0)
    with pytest.raises(ValidationError):
        SearcherConfig(noise_ratios=[])
    cfg = SearcherConfig.preset("pushing", "cem")
    assert (cfg.samples, cfg.iterations) == (16000, 20)
    small = SearcherConfig.preset("sorting", "mppi", scale=0.01)
    assert small.iterations == 18
    assert small.samples == round(32000 * 0.01 / 18)
    with pytest.raises(ValueError):
        SearcherConfig.preset("juggling")


@pytest.mark.parametrize("kind", ["cem", "mppi", "gd"])
def test_limit_caps_scored_samples(kind):
    obj = build_synthetic(4)
    box = obj.root_box()
    cfg = SearcherConfig(kind=kind, samples=50, iterations=6, agents=2, step_ratios=[0.1, 1.0])
    for limit in (1, 37, 300, 10_000):
        rep = search(obj, box, cfg, warm_start=box.center, init_samples=box.sample(np.random.default_rng(0), 5),
                     seed=0, limit=limit)
        assert rep.samples <= limit
        assert rep.uf <= obj.values(box.center)[0]
    unlimited = search(obj, box, cfg, warm_start=box.center, seed=0)
    capped = search(obj, box, cfg, warm_start=box.center, seed=0, limit=cfg.budget)
    assert capped.samples <= cfg.budget <= unlimited.samples


def test_batch_search_applies_per_box_limits():
    obj = build_synthetic(2)
    boxes = list(obj.root_box().bisect(0))
    reports = batch_search(obj, boxes, SearcherConfig(samples=40, iterations=3, agents=2), seeds=[0, 1],
                           limits=[10, 0])
    assert reports[0].samples == 10
    assert reports[1].samples == 0
    assert reports[1].uf == float("inf")
