#!/usr/bin/env python3
"""
Tests for the graph kernel: boxes, graph construction, forward evaluation and interval bounds.
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest

from errors import GraphError, NonFiniteError, ShapeMismatchError
from graph_core import BoxDomain, GraphBuilder, affine, interval_forward


def small_graph():
    """f(u) = 2 * ||relu(W u + b) - t||^2 + 1 over u in [-1, 1]^2."""
    g = GraphBuilder()
    u = g.input(2)
    h = g.linear(u, [[1.0, -1.0], [0.5, 2.0]], [0.1, -0.2])
    r = g.relu(h)
    sq = g.squared_distance(r, [0.3, 0.1])
    out = g.scalar_affine(sq, 2.0, 1.0)
    box = BoxDomain.uniform(2, -1.0, 1.0)
    return g.build(out, box=box), box, (h, r)


def test_box_basics():
    box = BoxDomain(np.array([-1.0, 0.0]), np.array([1.0, 4.0]))
    assert box.dim == 2
    assert np.array_equal(box.widths, [2.0, 4.0])
    assert np.array_equal(box.center, [0.0, 2.0])
    lo, up = box.bisect(1)
    assert np.array_equal(lo.upper, [1.0, 2.0])
    assert np.array_equal(up.lower, [-1.0, 2.0])
    assert lo.log_volume_ratio(box) == pytest.approx(np.log(0.5))
    assert box.contains(np.array([[0.0, 1.0], [2.0, 1.0]])).tolist() == [True, False]


def test_box_rejects_inverted_and_nonfinite():
    with pytest.raises(GraphError):
        BoxDomain(np.array([1.0]), np.array([0.0]))
    with pytest.raises(NonFiniteError):
        BoxDomain(np.array([np.nan]), np.array([0.0]))


def test_degenerate_box_is_allowed():
    box = BoxDomain(np.array([0.5, -1.0]), np.array([0.5, 1.0]))
    assert box.widths[0] == 0.0
    assert box.log_volume_ratio(box) == 0.0


def test_builder_validates_shapes():
    g = GraphBuilder()
    u = g.input(3)
    with pytest.raises(ShapeMismatchError):
        g.linear(u, np.ones((2, 2)))
    with pytest.raises(ShapeMismatchError):
        g.slice(u, 2, 5)
    with pytest.raises(NonFiniteError):
        g.linear(u, [[np.inf, 0.0, 0.0]])
    a = g.linear(u, np.ones((2, 3)))
    with pytest.raises(ShapeMismatchError):
        g.add(u, a)


def test_graph_needs_one_input_and_scalar_output():
    g = GraphBuilder()
    u = g.input(2)
    with pytest.raises(GraphError):
        g.build(u)
    g2 = GraphBuilder()
    g2.input(1)
    v = g2.input(1)
    with pytest.raises(GraphError):
        g2.build(v)


def test_evaluate_matches_manual_forward():
    graph, box, (h, r) = small_graph()
    X = np.array([[0.2, -0.4], [-1.0, 1.0], [0.9, 0.9]])
    W = np.array([[1.0, -1.0], [0.5, 2.0]])
    pre = X @ W.T + np.array([0.1, -0.2])
    expected = 2.0 * ((np.maximum(pre, 0.0) - [0.3, 0.1]) ** 2).sum(axis=1) + 1.0
    ev = graph.evaluate(X, watch=[h])
    assert np.allclose(ev.values, expected)
    assert np.allclose(ev.records[h], pre)


def test_single_point_is_promoted_to_batch():
    graph, _, _ = small_graph()
    assert graph.values(np.array([0.0, 0.0])).shape == (1,)


def test_evaluate_rejects_bad_inputs():
    graph, _, _ = small_graph()
    with pytest.raises(ShapeMismatchError):
        graph.values(np.zeros((2, 3)))
    with pytest.raises(NonFiniteError):
        graph.values(np.array([[np.nan, 0.0]]))


def test_exact_affine_is_batch_invariant():
    rng = np.random.default_rng(3)
    W = rng.normal(size=(7, 5))
    X = rng.normal(size=(40, 5))
    full = affine(X, W, exact=True)
    one = np.vstack([affine(X[i:i + 1], W, exact=True) for i in range(len(X))])
    assert np.array_equal(full, one)


def test_interval_forward_encloses_samples():
    graph, box, _ = small_graph()
    bounds = interval_forward(graph, box)
    pts = box.sample(np.random.default_rng(0), 2000)
    ev = graph.evaluate(pts, watch=range(len(graph.nodes)))
    for nid, vals in ev.records.items():
        lo, hi = bounds[nid]
        assert np.all(vals >= lo - 1e-12)
        assert np.all(vals <= hi + 1e-12)


def test_hinge_interval_encloses_samples():
    g = GraphBuilder()
    u = g.input(2)
    out = g.penalty_hinge(u, [0.1, 0.0], 0.5, 10.0)
    box = BoxDomain.uniform(2, -0.3, 0.6)
    graph = g.build(out)
    lo, hi = interval_forward(graph, box)[out]
    vals = graph.values(box.sample(np.random.default_rng(1), 3000))
    assert lo[0] <= vals.min() + 1e-12
    assert vals.max() <= hi[0] + 1e-12
    assert hi[0] == pytest.approx(5.0)
