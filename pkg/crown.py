# crown.py
# Linear bound propagation over CompGraph: ReLU relaxation, backward propagation with
# early stop, box concretization, and the three bounding modes used by branch and bound.

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import BoundError
from graph_core import BoxDomain, CompGraph, hinge_interval, interval_forward

logger = logging.getLogger(__name__)

BOUND_MODES = ("full-crown", "early-stop+empirical", "early-stop+interval")
STOP_RULES = ("last-relu", "every-step-output", "custom", "none")
SOUND_MODES = ("full-crown", "early-stop+interval")

# Per-neuron cases
ACTIVE, INACTIVE, UNSTABLE = 1, 0, 2

# Kinds that always terminate the backward flow: hinge penalties are bounded by intervals only
_ANCHOR_KINDS = ("input", "penalty_hinge")

Bounds = Tuple[np.ndarray, np.ndarray]


# ---------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class ReluRelaxation:
    """lower_slope*z + lower_offset <= ReLU(z) <= upper_slope*z + upper_offset on [l, u]."""

    lower_slope: np.ndarray
    lower_offset: np.ndarray
    upper_slope: np.ndarray
    upper_offset: np.ndarray
    cases: np.ndarray


@dataclass
class LinearBounds:
    """
    C * g_start(u) >= sum_v coeffs[v] @ g_v(u) + offset, valid for every u in the box
    (given the bounds used to build the relaxations). Rows = rows of C.
    """

    start: int
    coeffs: Dict[int, np.ndarray]
    offset: np.ndarray

    @property
    def anchors(self) -> List[int]:
        return sorted(self.coeffs)


@dataclass
class PreactBounds:
    """Bounds on node outputs keyed by node id; provenance is 'interval', 'crown' or 'empirical'."""

    bounds: Dict[int, Bounds] = field(default_factory=dict)
    provenance: Dict[int, str] = field(default_factory=dict)
    sample_counts: Dict[int, int] = field(default_factory=dict)

    def set(self, nid: int, lo: np.ndarray, hi: np.ndarray, provenance: str, count: Optional[int] = None) -> None:
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if lo.shape != hi.shape:
            raise BoundError(f"node {nid}: lower/upper shapes differ {lo.shape} vs {hi.shape}")
        if np.any(lo > hi):
            raise BoundError(f"node {nid}: lower bound exceeds upper bound")
        self.bounds[nid] = (lo, hi)
        self.provenance[nid] = provenance
        if count is not None:
            self.sample_counts[nid] = int(count)

    def has(self, nid: int) -> bool:
        return nid in self.bounds

    def get(self, nid: int) -> Bounds:
        return self.bounds[nid]

    @classmethod
    def from_intervals(cls, intervals: Dict[int, Bounds]) -> "PreactBounds":
        pb = cls()
        for nid, (lo, hi) in intervals.items():
            pb.set(nid, lo, hi, "interval")
        return pb

    @property
    def is_sound(self) -> bool:
        return all(p != "empirical" for p in self.provenance.values())


@dataclass(frozen=True)
class BoundResult:
    lf: float
    mode: str
    sound: bool
    stop_set: Tuple[int, ...] = ()
    argmin: Optional[np.ndarray] = None


# ---------------------------------------------------------------------
# ReLU relaxation
# ---------------------------------------------------------------------
def relax_relu(l: np.ndarray, u: np.ndarray, alpha_policy: Union[str, float] = "adaptive") -> ReluRelaxation:
    """
    Per-neuron linear relaxation of ReLU on [l, u].
    alpha_policy: 'adaptive' (slope 1 if u >= |l| else 0), 'zero', 'one', or a float in [0, 1].
    """
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if l.shape != u.shape:
        raise BoundError(f"relaxation bounds have different shapes {l.shape} vs {u.shape}")
    if np.any(l > u):
        bad = int(np.argmax(l > u))
        raise BoundError(f"relaxation needs l <= u; index {bad} has {l[bad]} > {u[bad]}")

    active = l >= 0
    inactive = (u <= 0) & ~active
    unstable = ~(active | inactive)
    cases = np.where(active, ACTIVE, np.where(inactive, INACTIVE, UNSTABLE))

    denom = np.where(unstable, u - l, 1.0)
    up_slope = np.where(active, 1.0, np.where(unstable, u / denom, 0.0))
    up_offset = np.where(unstable, -u * l / denom, 0.0)

    if alpha_policy == "adaptive":
        alpha = (u >= np.abs(l)).astype(np.float64)
    elif alpha_policy == "zero":
        alpha = np.zeros_like(l)
    elif alpha_policy == "one":
        alpha = np.ones_like(l)
    else:
        a = float(alpha_policy)
        if not 0.0 <= a <= 1.0:
            raise BoundError(f"alpha must lie in [0, 1], got {a}")
        alpha = np.full_like(l, a)
    lo_slope = np.where(active, 1.0, np.where(unstable, alpha, 0.0))
    return ReluRelaxation(lo_slope, np.zeros_like(l), up_slope, up_offset, cases)


def relax_squared_distance(l: np.ndarray, u: np.ndarray, target: np.ndarray,
                           weights: np.ndarray) -> Tuple[np.ndarray, float, np.ndarray, float]:
    """
    sum_i w_i (x_i - t_i)^2 on [l, u]: tangent at the box center below, chord above.
    -> (lower slopes, lower intercept, upper slopes, upper intercept)
    """
    m = (l + u) / 2.0
    lo_slope = 2.0 * weights * (m - target)
    lo_int = float((weights * (m - target) ** 2 - lo_slope * m).sum())
    up_slope = weights * (l + u - 2.0 * target)
    up_int = float((weights * (l - target) ** 2 - up_slope * l).sum())
    return lo_slope, lo_int, up_slope, up_int


# ---------------------------------------------------------------------
# Backward propagation (BFS with out-degree countdown, early stop)
# ---------------------------------------------------------------------
def _flow_nodes(graph: CompGraph, start: int, stop: set) -> set:
    """Nodes that receive backward flow from start."""
    seen = {start}
    queue = deque([start])
    while queue:
        nid = queue.popleft()
        node = graph.nodes[nid]
        if nid in stop or node.kind in _ANCHOR_KINDS or node.kind == "constant":
            continue
        for src in node.inputs:
            if src not in seen:
                seen.add(src)
                queue.append(src)
    return seen


def backward_propagate(graph: CompGraph, preact: PreactBounds, start: Optional[int] = None,
                       stop_set: Iterable[int] = (), coeff: Optional[np.ndarray] = None,
                       alpha_policy: Union[str, float] = "adaptive") -> LinearBounds:
    """
    Propagate C * g_start backwards. Nodes in stop_set (and inputs / hinge penalties)
    absorb the flow and become anchors of the returned linear form.
    """
    start = graph.output if start is None else start
    stop = set(stop_set)
    reach = graph.ancestors(start)
    for s in stop:
        if s not in reach:
            raise BoundError(f"stop node {s} is unreachable from node {start}")
    dim_start = graph.nodes[start].dim
    C = np.eye(dim_start) if coeff is None else np.atleast_2d(np.asarray(coeff, dtype=np.float64))
    if C.shape[1] != dim_start:
        raise BoundError(f"coefficient width {C.shape[1]} does not match node {start} dim {dim_start}")
    m = C.shape[0]

    flow = _flow_nodes(graph, start, stop)
    # countdown: number of flow-carrying consumer edges still to arrive at each node
    pending = {nid: 0 for nid in flow}
    for nid in flow:
        node = graph.nodes[nid]
        if nid in stop or node.kind in _ANCHOR_KINDS or node.kind == "constant":
            continue
        for src in node.inputs:
            pending[src] += 1

    lam: Dict[int, np.ndarray] = {start: C.copy()}
    offset = np.zeros(m)
    coeffs: Dict[int, np.ndarray] = {}
    queue = deque([start])

    def send(src: int, contrib: np.ndarray) -> None:
        if src in lam:
            lam[src] = lam[src] + contrib
        else:
            lam[src] = contrib
        pending[src] -= 1
        if pending[src] == 0:
            queue.append(src)

    while queue:
        nid = queue.popleft()
        node = graph.nodes[nid]
        L = lam.pop(nid)
        p = node.params
        kind = node.kind
        if nid in stop or kind in _ANCHOR_KINDS:
            coeffs[nid] = coeffs.get(nid, 0) + L
            continue
        if kind == "constant":
            offset += L @ p["value"]
            continue
        if kind == "linear":
            offset += L @ p["b"]
            send(node.inputs[0], L @ p["W"])
        elif kind == "relu":
            src = node.inputs[0]
            if not preact.has(src):
                raise BoundError(f"missing pre-activation bounds for ReLU node {nid} (input {src})")
            l, u = preact.get(src)
            r = relax_relu(l, u, alpha_policy)
            Lp, Ln = np.clip(L, 0, None), np.clip(L, None, 0)
            offset += Lp @ r.lower_offset + Ln @ r.upper_offset
            send(src, Lp * r.lower_slope + Ln * r.upper_slope)
        elif kind == "sum":
            for src in node.inputs:
                send(src, L.copy())
        elif kind == "scalar_affine":
            offset += p["c"] * L.sum(axis=1)
            send(node.inputs[0], p["a"] * L)
        elif kind == "squared_distance":
            src = node.inputs[0]
            if not preact.has(src):
                raise BoundError(f"missing input bounds for squared-distance node {nid} (input {src})")
            l, u = preact.get(src)
            lo_s, lo_i, up_s, up_i = relax_squared_distance(l, u, p["target"], p["weights"])
            w = L[:, 0]
            pos = w >= 0
            offset += np.where(pos, w * lo_i, w * up_i)
            send(src, np.where(pos[:, None], w[:, None] * lo_s[None, :], w[:, None] * up_s[None, :]))
        elif kind == "concat":
            col = 0
            for src in node.inputs:
                width = graph.nodes[src].dim
                send(src, L[:, col:col + width].copy())
                col += width
        elif kind == "slice":
            src = node.inputs[0]
            full = np.zeros((m, graph.nodes[src].dim))
            full[:, p["start"]:p["stop"]] = L
            send(src, full)
        else:
            raise BoundError(f"no propagation rule for node kind {kind!r}")

    if lam:
        raise BoundError(f"backward flow did not drain; stuck at nodes {sorted(lam)}")
    return LinearBounds(start=start, coeffs=coeffs, offset=offset)


# ---------------------------------------------------------------------
# Concretization
# ---------------------------------------------------------------------
def concretize(lb: LinearBounds, frontier: Dict[int, Bounds]) -> np.ndarray:
    """
    Minimum of the linear form over the product of anchor boxes:
    sum_v (A_v c_v - |A_v| eps_v) + offset with c = center, eps = half-width per coordinate.
    """
    total = lb.offset.copy()
    for nid, A in lb.coeffs.items():
        if nid not in frontier:
            raise BoundError(f"no bounds supplied for anchor node {nid}")
        lo, hi = frontier[nid]
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise BoundError(f"non-finite bounds at anchor node {nid}")
        center = (lo + hi) / 2.0
        eps = (hi - lo) / 2.0
        total += A @ center - np.abs(A) @ eps
    return total


# ---------------------------------------------------------------------
# Stop sets + bound sources
# ---------------------------------------------------------------------
def stop_set(graph: CompGraph, rule: str = "last-relu", custom: Optional[Sequence[int]] = None) -> Tuple[int, ...]:
    """Nodes where early-stop propagation halts."""
    if rule == "none":
        return ()
    if rule == "custom":
        return tuple(custom or ())
    if rule == "every-step-output":
        states = graph.meta.get("states")
        if states:
            return tuple(states)
        rule = "last-relu"
    if rule == "last-relu":
        relus = graph.meta.get("last_relus")
        if relus:
            return (relus[-1],)
        reach = graph.ancestors(graph.output)
        candidates = [nid for nid in graph.order if graph.nodes[nid].kind == "relu" and nid in reach]
        return (candidates[-1],) if candidates else ()
    raise BoundError(f"unknown stop rule {rule!r}; expected one of {STOP_RULES}")


def needed_nodes(graph: CompGraph, stop: Iterable[int] = (), start: Optional[int] = None) -> List[int]:
    """Every node whose output bounds a backward pass from start (with this stop set) consumes."""
    start = graph.output if start is None else start
    stop = set(stop)
    flow = _flow_nodes(graph, start, stop)
    need = set()
    for nid in flow:
        node = graph.nodes[nid]
        if nid in stop or node.kind == "penalty_hinge":
            need.add(nid)
        elif node.kind in ("relu", "squared_distance") and nid not in stop:
            need.add(node.inputs[0])
    need.discard(graph.input_id)
    return sorted(need)


def watch_nodes(graph: CompGraph, mode: str = "early-stop+empirical", rule: str = "last-relu",
                custom: Optional[Sequence[int]] = None) -> List[int]:
    """Nodes a searcher must record min/max for so empirical bounding has what it needs."""
    if mode != "early-stop+empirical":
        return []
    return needed_nodes(graph, stop_set(graph, rule, custom))


def full_crown_bounds(graph: CompGraph, box: BoxDomain, alpha_policy: Union[str, float] = "adaptive",
                      intervals: Optional[Dict[int, Bounds]] = None) -> PreactBounds:
    """
    Bounds for every node the final pass needs, each from its own backward pass
    to the input (quadratic in depth), intersected with the interval bounds.
    """
    intervals = intervals if intervals is not None else interval_forward(graph, box)
    preact = PreactBounds()
    targets = set(needed_nodes(graph))
    # bounds of a node feeding a relaxation may need bounds of earlier relaxations first
    for nid in list(targets):
        for anc in graph.ancestors(nid):
            node = graph.nodes[anc]
            if node.kind in ("relu", "squared_distance"):
                targets.add(node.inputs[0])
            elif node.kind == "penalty_hinge":
                targets.add(anc)
    targets.discard(graph.input_id)
    for nid in graph.order:
        if nid not in targets:
            continue
        node = graph.nodes[nid]
        ilo, ihi = intervals[nid]
        if node.kind == "constant":
            preact.set(nid, ilo, ihi, "interval")
            continue
        if node.kind == "penalty_hinge":
            src = node.inputs[0]
            lo_in, hi_in = preact.get(src) if preact.has(src) else intervals[src]
            lo, hi = hinge_interval(lo_in, hi_in, node.params["center"], node.params["size"], node.params["scale"])
            preact.set(nid, np.maximum(lo, ilo), np.minimum(hi, ihi), "crown")
            continue
        d = node.dim
        lb = backward_propagate(graph, preact, start=nid, coeff=np.vstack([np.eye(d), -np.eye(d)]),
                                alpha_policy=alpha_policy)
        frontier = _frontier_bounds(graph, lb, box, preact, intervals)
        both = concretize(lb, frontier)
        lo = np.maximum(both[:d], ilo)
        hi = np.minimum(-both[d:], ihi)
        hi = np.maximum(hi, lo)
        preact.set(nid, lo, hi, "crown")
    return preact


def empirical_bounds(records: Dict[int, Bounds], sample_count: int, graph: CompGraph,
                     box: BoxDomain, nodes: Iterable[int]) -> PreactBounds:
    """Recorded sample min/max where available, interval fallback elsewhere."""
    intervals = interval_forward(graph, box)
    preact = PreactBounds()
    missing = []
    for nid in nodes:
        if nid in records:
            lo, hi = records[nid]
            preact.set(nid, lo, hi, "empirical", count=sample_count)
        else:
            missing.append(nid)
            preact.set(nid, *intervals[nid], "interval")
    if missing:
        logger.warning(f"No recorded samples for {len(missing)} node(s); using interval bounds for {missing[:5]}")
    return preact


def _frontier_bounds(graph: CompGraph, lb: LinearBounds, box: BoxDomain, preact: PreactBounds,
                     intervals: Optional[Dict[int, Bounds]] = None) -> Dict[int, Bounds]:
    frontier: Dict[int, Bounds] = {}
    for nid in lb.coeffs:
        if nid == graph.input_id:
            frontier[nid] = (box.lower, box.upper)
        elif preact.has(nid):
            frontier[nid] = preact.get(nid)
        else:
            node = graph.nodes[nid]
            src = node.inputs[0] if node.inputs else None
            if node.kind == "relu" and src is not None and preact.has(src):
                lo, hi = preact.get(src)
                frontier[nid] = (np.maximum(lo, 0.0), np.maximum(hi, 0.0))
            else:
                if intervals is None:
                    intervals = interval_forward(graph, box)
                frontier[nid] = intervals[nid]
    return frontier


# ---------------------------------------------------------------------
# Lower bound on f over a box
# ---------------------------------------------------------------------
def lower_bound(graph: CompGraph, box: BoxDomain, mode: str = "early-stop+interval",
                records: Optional[Dict[int, Bounds]] = None, sample_count: int = 0,
                rule: str = "last-relu", custom_stop: Optional[Sequence[int]] = None,
                alpha_policy: Union[str, float] = "adaptive",
                preact_hook: Optional[Callable[[PreactBounds], PreactBounds]] = None) -> BoundResult:
    """
    lf <= f(u) over the box (sound modes) or <= f over the recorded samples (empirical mode).
    preact_hook lets audits tamper with the bounds before propagation.
    """
    if mode not in BOUND_MODES:
        raise BoundError(f"unknown bounding mode {mode!r}; expected one of {BOUND_MODES}")
    if box.dim != graph.dim:
        raise BoundError(f"box has dim {box.dim}, graph expects {graph.dim}")

    if mode == "full-crown":
        stop: Tuple[int, ...] = ()
        preact = full_crown_bounds(graph, box, alpha_policy)
    else:
        stop = stop_set(graph, rule, custom_stop)
        if mode == "early-stop+interval":
            preact = PreactBounds.from_intervals(interval_forward(graph, box))
        else:
            preact = empirical_bounds(records or {}, sample_count, graph, box, needed_nodes(graph, stop))
    if preact_hook is not None:
        preact = preact_hook(preact)

    lb = backward_propagate(graph, preact, stop_set=stop, alpha_policy=alpha_policy)
    frontier = _frontier_bounds(graph, lb, box, preact)
    lf = float(concretize(lb, frontier)[0])
    sound = mode in SOUND_MODES and preact.is_sound and preact_hook is None
    return BoundResult(lf=lf, mode=mode, sound=sound, stop_set=tuple(stop), argmin=_input_vertex(graph, lb, box))


def _input_vertex(graph: CompGraph, lb: LinearBounds, box: BoxDomain) -> Optional[np.ndarray]:
    """Box vertex minimizing the input part of the linear bound; None when the input is not an anchor."""
    if graph.input_id not in lb.coeffs:
        return None
    A = lb.coeffs[graph.input_id][0]
    return np.where(A > 0, box.lower, np.where(A < 0, box.upper, box.center))
