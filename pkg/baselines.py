# baselines.py
# Classical planners over the learned dynamics (RRT, PRM + A*) and the plain sampler
# harness used when CEM / MPPI / GD run on the whole action box without branching.

import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import networkx as nx
import numpy as np

from graph_core import BoxDomain
from model_io import MlpModel, Scenario, step_dynamics
from search import SearcherConfig, SearchReport, search

logger = logging.getLogger(__name__)

DEFAULT_RRT_NODES = 4000
DEFAULT_RRT_ACTIONS = 1000
DEFAULT_GOAL_BIAS = 0.5
DEFAULT_PRM_THRESHOLD = 0.15


# ---------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class TreeNode:
    x: np.ndarray
    p: np.ndarray
    parent: Optional[int] = None
    action: Optional[np.ndarray] = None


@dataclass
class PathResult:
    """
    A path as a node sequence plus, per edge, the action taken and the state the model
    predicts from the edge's source node. For RRT predicted[i] is exactly node i+1.
    """

    success: bool
    states: np.ndarray
    positions: np.ndarray
    actions: np.ndarray
    predicted: np.ndarray
    nodes: List = field(default_factory=list)
    goal_distance: float = float("inf")
    expanded: int = 0
    wall_ms: float = 0.0
    message: str = ""

    @property
    def length(self) -> int:
        return int(self.actions.shape[0])


@dataclass
class Roadmap:
    graph: nx.DiGraph
    threshold: float

    @property
    def node_count(self) -> int:
        return self.graph.number_of_nodes()

    @property
    def edge_count(self) -> int:
        return self.graph.number_of_edges()


# ---------------------------------------------------------------------
# Collision + spaces
# ---------------------------------------------------------------------
def penalty_batch(scenario: Scenario, cost_form: str, X: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Hinge penalty per row of (states X, effector positions P); 0 means collision-free."""
    X = np.atleast_2d(X)
    P = np.atleast_2d(P)
    k = scenario.action_dim
    lam = scenario.penalty_scale
    total = np.zeros(X.shape[0])
    if cost_form == "tracking" or scenario.features != "relative":
        return total
    kps = X.reshape(X.shape[0], -1, k)

    def hinge(dist: np.ndarray, size: float) -> np.ndarray:
        return lam * np.maximum(size - dist, 0.0)

    if cost_form == "tracking_obstacles":
        for obs in scenario.obstacles:
            c = np.asarray(obs.center)
            total += hinge(np.linalg.norm(P - c, axis=1), obs.size)
            total += hinge(np.linalg.norm(kps - c, axis=2), obs.size).sum(axis=1)
    elif cost_form == "pusher_penalty":
        total += hinge(np.linalg.norm(kps - P[:, None, :], axis=2), scenario.piece_radius).sum(axis=1)
    return total


def collides(scenario: Scenario, cost_form: str, X: np.ndarray, P: np.ndarray) -> np.ndarray:
    return penalty_batch(scenario, cost_form, X, P) > 0


def default_spaces(scenario: Scenario, margin: float = 0.1) -> Tuple[BoxDomain, BoxDomain]:
    """(state space, effector space): the bounding box of start, target and p0, padded."""
    k = scenario.action_dim
    x0, xt, p0 = (np.asarray(v, dtype=np.float64) for v in (scenario.x0, scenario.x_target, scenario.p0))
    state_lo = np.minimum(x0, xt) - margin
    state_hi = np.maximum(x0, xt) + margin
    if scenario.features == "relative":
        pts = np.vstack([x0.reshape(-1, k), xt.reshape(-1, k), p0[None, :]])
    else:
        pts = p0[None, :]
    return BoxDomain(state_lo, state_hi), BoxDomain(pts.min(axis=0) - margin, pts.max(axis=0) + margin)


# ---------------------------------------------------------------------
# RRT
# ---------------------------------------------------------------------
def rrt_plan(model: MlpModel, scenario: Scenario, cost_form: str = "tracking_obstacles",
             max_nodes: int = DEFAULT_RRT_NODES, n_actions: int = DEFAULT_RRT_ACTIONS,
             goal_bias: float = DEFAULT_GOAL_BIAS, threshold: Optional[float] = None,
             state_space: Optional[BoxDomain] = None, seed: int = 0,
             timeout: Optional[float] = None) -> PathResult:
    """
    Grow a tree from x0: pick a target (the goal with probability goal_bias, else a random
    state), extend the nearest node with the collision-free candidate action whose predicted
    state lands closest to the target, stop once a node is within threshold of the goal.
    """
    rng = np.random.default_rng(seed)
    delta = scenario.goal_threshold if threshold is None else threshold
    space = state_space or default_spaces(scenario)[0]
    goal = np.asarray(scenario.x_target, dtype=np.float64)
    u_lo = np.asarray(scenario.action_lower, dtype=np.float64)
    u_hi = np.asarray(scenario.action_upper, dtype=np.float64)
    t0 = time.time()

    tree = [TreeNode(np.asarray(scenario.x0, dtype=np.float64), np.asarray(scenario.p0, dtype=np.float64))]
    xs = [tree[0].x]

    def finish(idx: int, success: bool, message: str) -> PathResult:
        chain = []
        while idx is not None:
            chain.append(idx)
            idx = tree[idx].parent
        chain.reverse()
        k = scenario.action_dim
        acts = np.array([tree[i].action for i in chain[1:]]).reshape(-1, k)
        states = np.array([tree[i].x for i in chain])
        return PathResult(
            success=success,
            states=states,
            positions=np.array([tree[i].p for i in chain]),
            actions=acts,
            predicted=states[1:],
            nodes=chain,
            goal_distance=float(np.linalg.norm(states[-1] - goal)),
            expanded=len(tree),
            wall_ms=(time.time() - t0) * 1000.0,
            message=message,
        )

    if np.linalg.norm(tree[0].x - goal) <= delta:
        return finish(0, True, "start already within threshold")

    for _ in range(max_nodes):
        if timeout is not None and time.time() - t0 >= timeout:
            break
        target = goal if rng.random() < goal_bias else space.sample(rng, 1)[0]
        near = int(np.argmin(np.linalg.norm(np.asarray(xs) - target, axis=1)))
        node = tree[near]
        U = rng.uniform(u_lo, u_hi, size=(n_actions, u_lo.shape[0]))
        X_new = step_dynamics(model, np.tile(node.x, (n_actions, 1)), np.tile(node.p, (n_actions, 1)), U,
                              scenario.features)
        P_new = node.p + U
        free = ~collides(scenario, cost_form, X_new, P_new)
        if not free.any():
            continue
        dist = np.where(free, np.linalg.norm(X_new - target, axis=1), np.inf)
        pick = int(np.argmin(dist))
        tree.append(TreeNode(X_new[pick], P_new[pick], parent=near, action=U[pick]))
        xs.append(X_new[pick])
        if np.linalg.norm(X_new[pick] - goal) <= delta:
            logger.info(f"RRT reached the goal with {len(tree)} nodes in {time.time() - t0:.3f}s")
            return finish(len(tree) - 1, True, "goal reached")

    closest = int(np.argmin(np.linalg.norm(np.asarray(xs) - goal, axis=1)))
    logger.warning(f"RRT budget exhausted after {len(tree)} nodes; closest node is {closest}")
    return finish(closest, False, "budget exhausted")


# ---------------------------------------------------------------------
# PRM
# ---------------------------------------------------------------------
def _connect(model: MlpModel, scenario: Scenario, x: np.ndarray, p: np.ndarray,
             X: np.ndarray, P: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Predicted state from (x, p) toward every (X_j, P_j) and its distance to X_j."""
    n = X.shape[0]
    U = P - p
    pred = step_dynamics(model, np.tile(x, (n, 1)), np.tile(p, (n, 1)), U, scenario.features)
    return pred, np.linalg.norm(pred - X, axis=1)


def prm_build(model: MlpModel, scenario: Scenario, n_nodes: int, threshold: float = DEFAULT_PRM_THRESHOLD,
              state_space: Optional[BoxDomain] = None, position_space: Optional[BoxDomain] = None,
              seed: int = 0, samples: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> Roadmap:
    """
    Directed roadmap over N sampled (x, p) pairs: edge i -> j (i != j) when the model,
    stepping from x_i with u = p_j - p_i, lands within threshold of x_j (closed ball).
    """
    if samples is None:
        rng = np.random.default_rng(seed)
        spaces = default_spaces(scenario)
        sx = state_space or spaces[0]
        sp = position_space or spaces[1]
        X, P = sx.sample(rng, n_nodes), sp.sample(rng, n_nodes)
    else:
        X, P = (np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in samples)
    G = nx.DiGraph()
    for i in range(X.shape[0]):
        G.add_node(i, x=X[i], p=P[i])
    for i in range(X.shape[0]):
        pred, dist = _connect(model, scenario, X[i], P[i], X, P)
        for j in np.nonzero(dist <= threshold)[0]:
            if j != i:
                G.add_edge(i, int(j), action=P[j] - P[i], predicted=pred[j],
                           weight=float(np.linalg.norm(X[i] - X[j])))
    roadmap = Roadmap(G, threshold)
    logger.info(f"PRM built: {roadmap.node_count} nodes, {roadmap.edge_count} edges (threshold={threshold})")
    return roadmap


def prm_plan(roadmap: Roadmap, model: MlpModel, scenario: Scenario, cost_form: str = "tracking_obstacles",
             x_init: Optional[np.ndarray] = None, p_init: Optional[np.ndarray] = None,
             goal: Optional[np.ndarray] = None) -> PathResult:
    """
    Connect the start into the roadmap, drop colliding nodes and edges, then A* (edge
    weight and heuristic = Euclidean state distance) to the reachable node nearest the goal.
    """
    t0 = time.time()
    x_init = np.asarray(scenario.x0 if x_init is None else x_init, dtype=np.float64)
    p_init = np.asarray(scenario.p0 if p_init is None else p_init, dtype=np.float64)
    goal = np.asarray(scenario.x_target if goal is None else goal, dtype=np.float64)
    k = scenario.action_dim

    G = roadmap.graph.copy()
    ids = list(G.nodes)

    def failure(message: str) -> PathResult:
        logger.warning(f"PRM planning failed: {message}")
        return PathResult(
            success=False,
            states=x_init[None, :],
            positions=p_init[None, :],
            actions=np.zeros((0, k)),
            predicted=np.zeros((0, x_init.shape[0])),
            nodes=["init"],
            goal_distance=float(np.linalg.norm(x_init - goal)),
            wall_ms=(time.time() - t0) * 1000.0,
            message=message,
        )

    if ids:
        X = np.array([G.nodes[i]["x"] for i in ids])
        P = np.array([G.nodes[i]["p"] for i in ids])
        colliding = collides(scenario, cost_form, X, P)
        G.remove_nodes_from([i for i, bad in zip(ids, colliding) if bad])
    G.add_node("init", x=x_init, p=p_init)
    ids = [i for i in G.nodes if i != "init"]
    if not ids:
        return failure("every roadmap node collides")
    X = np.array([G.nodes[i]["x"] for i in ids])
    P = np.array([G.nodes[i]["p"] for i in ids])
    pred, dist = _connect(model, scenario, x_init, p_init, X, P)
    for j in np.nonzero(dist <= roadmap.threshold)[0]:
        G.add_edge("init", ids[j], action=P[j] - p_init, predicted=pred[j],
                   weight=float(np.linalg.norm(x_init - X[j])))

    bad_edges = [(a, b) for a, b, d in G.edges(data=True)
                 if collides(scenario, cost_form, d["predicted"], G.nodes[b]["p"])[0]]
    G.remove_edges_from(bad_edges)

    reachable = nx.descendants(G, "init")
    if not reachable:
        return failure("start is disconnected from the roadmap")
    reach = sorted(reachable, key=str)
    target = reach[int(np.argmin([np.linalg.norm(G.nodes[i]["x"] - goal) for i in reach]))]

    try:
        path = astar_path(G, "init", target)
    except nx.NetworkXNoPath:
        return failure("no path to the node nearest the goal")

    edges = list(zip(path[:-1], path[1:]))
    states = np.array([G.nodes[i]["x"] for i in path])
    result = PathResult(
        success=True,
        states=states,
        positions=np.array([G.nodes[i]["p"] for i in path]),
        actions=np.array([G.edges[e]["action"] for e in edges]).reshape(-1, k),
        predicted=np.array([G.edges[e]["predicted"] for e in edges]).reshape(-1, x_init.shape[0]),
        nodes=path,
        goal_distance=float(np.linalg.norm(states[-1] - goal)),
        expanded=G.number_of_nodes(),
        wall_ms=(time.time() - t0) * 1000.0,
        message="path found",
    )
    logger.info(f"PRM path with {result.length} edges, goal distance {result.goal_distance:.4f}")
    return result


def astar_path(graph: nx.DiGraph, source, target) -> List:
    """A* over edge weights with the Euclidean state distance as heuristic (admissible: weights are state distances)."""
    def heuristic(a, b) -> float:
        return float(np.linalg.norm(graph.nodes[a]["x"] - graph.nodes[b]["x"]))

    return nx.astar_path(graph, source, target, heuristic=heuristic, weight="weight")


def path_cost(graph: nx.DiGraph, path: List) -> float:
    return float(sum(graph.edges[a, b]["weight"] for a, b in zip(path[:-1], path[1:])))


# ---------------------------------------------------------------------
# Sampler harness
# ---------------------------------------------------------------------
def sampler_plan(objective, kind: str = "cem", config: Optional[SearcherConfig] = None,
                 seed: Optional[int] = None, warm_start: Optional[np.ndarray] = None,
                 exact: Optional[bool] = None) -> SearchReport:
    """
    CEM / MPPI / GD on the objective's whole box, no branching. The box center is scored
    when no warm start is given; it counts against the config's sample budget.
    """
    cfg = (config or SearcherConfig()).model_copy(update={"kind": kind})
    box = objective.root_box()
    t0 = time.time()
    start = box.center if warm_start is None else warm_start
    report = search(objective, box, cfg, warm_start=start, seed=seed, exact=exact, limit=cfg.budget)
    logger.info(f"{kind.upper()} done: uf={report.uf:.6f} samples={report.samples} in {time.time() - t0:.3f}s")
    return report
