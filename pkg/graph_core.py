# graph_core.py
# Dense numeric kernel + the computational graph the planning objective f(u) is expressed in.
# Graphs are immutable once built; evaluation and interval bounds run batchwise with numpy.

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from errors import GraphError, NonFiniteError, ShapeMismatchError
from settings import thread_count

logger = logging.getLogger(__name__)

NODE_KINDS = (
    "input",
    "constant",
    "linear",
    "relu",
    "sum",
    "scalar_affine",
    "squared_distance",
    "penalty_hinge",
    "concat",
    "slice",
)

# Broadcast-sum chunk size (elements) for the exact, batch-invariant affine kernel
_EXACT_CHUNK = 1 << 22


# ---------------------------------------------------------------------
# Matrix / Vector helpers
# ---------------------------------------------------------------------
def as_vector(values: Any, dim: Optional[int] = None, name: str = "vector") -> np.ndarray:
    """Validate a 1-D finite float vector (read-only copy)."""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeMismatchError(f"{name} must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ShapeMismatchError(f"{name} must have length {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains NaN/Inf")
    arr.flags.writeable = False
    return arr


def as_matrix(values: Any, shape: Optional[Tuple[int, int]] = None, name: str = "matrix") -> np.ndarray:
    """Validate a 2-D finite row-major float matrix (read-only copy)."""
    arr = np.array(values, dtype=np.float64, order="C")
    if arr.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise ShapeMismatchError(f"{name} must have shape {tuple(shape)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains NaN/Inf")
    arr.flags.writeable = False
    return arr


def affine(X: np.ndarray, W: np.ndarray, b: Optional[np.ndarray] = None, exact: bool = False) -> np.ndarray:
    """
    Row-wise X @ W.T + b.

    exact=True uses a per-row broadcast reduction whose result for a row does not
    depend on how many other rows are in the batch (BLAS blocking does).
    """
    if X.shape[-1] != W.shape[1]:
        raise ShapeMismatchError(f"cannot apply {W.shape} matrix to inputs of width {X.shape[-1]}")
    if exact:
        rows_per_chunk = max(1, _EXACT_CHUNK // max(1, W.size))
        out = np.empty((X.shape[0], W.shape[0]), dtype=np.float64)
        for start in range(0, X.shape[0], rows_per_chunk):
            chunk = X[start:start + rows_per_chunk]
            out[start:start + rows_per_chunk] = (chunk[:, None, :] * W[None, :, :]).sum(axis=-1)
    else:
        out = X @ W.T
    if b is not None:
        out = out + b
    return out


# ---------------------------------------------------------------------
# Box domains
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box over the flattened action sequence u (d = k*H)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = as_vector(self.lower, name="box lower")
        upper = as_vector(self.upper, dim=lower.shape[0], name="box upper")
        if np.any(lower > upper):
            bad = int(np.argmax(lower > upper))
            raise GraphError(f"box lower > upper at index {bad}: {lower[bad]} > {upper[bad]}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def uniform(cls, dim: int, low: float, high: float) -> "BoxDomain":
        return cls(np.full(dim, low), np.full(dim, high))

    @property
    def dim(self) -> int:
        return int(self.lower.shape[0])

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return (self.lower + self.upper) / 2.0

    @property
    def half_widths(self) -> np.ndarray:
        return (self.upper - self.lower) / 2.0

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Boolean per row (or scalar for a single point)."""
        pts = np.asarray(points, dtype=np.float64)
        inside = (pts >= self.lower - tol) & (pts <= self.upper + tol)
        return inside.all(axis=-1)

    def clamp(self, points: np.ndarray) -> np.ndarray:
        return np.clip(points, self.lower, self.upper)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    def bisect(self, j: int) -> Tuple["BoxDomain", "BoxDomain"]:
        """Halve along dimension j -> (lower half, upper half)."""
        mid = (self.lower[j] + self.upper[j]) / 2.0
        lo_upper = self.upper.copy()
        lo_upper[j] = mid
        up_lower = self.lower.copy()
        up_lower[j] = mid
        return BoxDomain(self.lower, lo_upper), BoxDomain(up_lower, self.upper)

    def log_volume_ratio(self, root: "BoxDomain") -> float:
        """log(vol(self)/vol(root)) over the dimensions where the root has width."""
        root_w = root.widths
        mask = root_w > 0
        w = self.widths[mask]
        if np.any(w <= 0):
            return float("-inf")
        return float(np.sum(np.log(w) - np.log(root_w[mask])))

    def to_dict(self) -> Dict[str, List[float]]:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


# ---------------------------------------------------------------------
# Nodes + graph
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class GraphNode:
    id: int
    kind: str
    inputs: Tuple[int, ...]
    dim: int
    params: Dict[str, Any] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise GraphError(f"unknown node kind {self.kind!r}")


@dataclass(frozen=True)
class Evaluation:
    values: np.ndarray
    records: Dict[int, np.ndarray] = field(default_factory=dict)


class CompGraph:
    """
    Directed acyclic graph of the objective. Exactly one input node (the flattened u)
    and one scalar output node.
    """

    def __init__(self, nodes: Sequence[GraphNode], output: int, meta: Optional[Dict[str, Any]] = None):
        self.nodes: Tuple[GraphNode, ...] = tuple(nodes)
        for idx, node in enumerate(self.nodes):
            if node.id != idx:
                raise GraphError(f"node ids must be dense and ordered; node {idx} has id {node.id}")
            for src in node.inputs:
                if src < 0 or src >= len(self.nodes):
                    raise GraphError(f"node {idx} references missing node {src}")
        inputs = [n.id for n in self.nodes if n.kind == "input"]
        if len(inputs) != 1:
            raise GraphError(f"graph must have exactly one input node, found {len(inputs)}")
        if output < 0 or output >= len(self.nodes):
            raise GraphError(f"output node {output} does not exist")
        if self.nodes[output].dim != 1:
            raise GraphError(f"output node must be scalar, has dim {self.nodes[output].dim}")
        self.input_id = inputs[0]
        self.output = output
        self.meta = dict(meta or {})
        self.order = self._topological_order()
        self.successors: Dict[int, List[int]] = {n.id: [] for n in self.nodes}
        for node in self.nodes:
            for src in node.inputs:
                self.successors[src].append(node.id)

    def _topological_order(self) -> Tuple[int, ...]:
        indeg = {n.id: len(n.inputs) for n in self.nodes}
        consumers: Dict[int, List[int]] = {n.id: [] for n in self.nodes}
        for node in self.nodes:
            for src in node.inputs:
                consumers[src].append(node.id)
        queue = deque(sorted(i for i, d in indeg.items() if d == 0))
        order = []
        while queue:
            nid = queue.popleft()
            order.append(nid)
            for nxt in consumers[nid]:
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    queue.append(nxt)
        if len(order) != len(self.nodes):
            raise GraphError("graph has a cycle")
        return tuple(order)

    # --- protocol shared with the separable objective ---
    @property
    def dim(self) -> int:
        return self.nodes[self.input_id].dim

    def root_box(self) -> Optional[BoxDomain]:
        return self.meta.get("box")

    def ancestors(self, node_id: int) -> set:
        seen = {node_id}
        stack = [node_id]
        while stack:
            for src in self.nodes[stack.pop()].inputs:
                if src not in seen:
                    seen.add(src)
                    stack.append(src)
        return seen

    def nodes_of_kind(self, *kinds: str) -> List[int]:
        return [n.id for n in self.nodes if n.kind in kinds]

    def evaluate(self, batch: np.ndarray, watch: Optional[Iterable[int]] = None,
                 exact: Optional[bool] = None) -> Evaluation:
        return evaluate(self, batch, watch=watch, exact=exact)

    def values(self, batch: np.ndarray) -> np.ndarray:
        return evaluate(self, batch).values

    def __repr__(self) -> str:
        return f"CompGraph(nodes={len(self.nodes)}, dim={self.dim}, output={self.output})"


class GraphBuilder:
    """Append-only builder; ids are handed out in topological order."""

    def __init__(self):
        self._nodes: List[GraphNode] = []

    def _add(self, kind: str, inputs: Sequence[int], dim: int, name: str = "", **params) -> int:
        for src in inputs:
            if src < 0 or src >= len(self._nodes):
                raise GraphError(f"{kind} node references missing node {src}")
        nid = len(self._nodes)
        self._nodes.append(GraphNode(nid, kind, tuple(inputs), int(dim), params, name))
        return nid

    def dim(self, nid: int) -> int:
        return self._nodes[nid].dim

    def input(self, dim: int, name: str = "u") -> int:
        if dim < 1:
            raise GraphError("input dimension must be >= 1")
        return self._add("input", (), dim, name)

    def constant(self, value, name: str = "") -> int:
        v = as_vector(value, name="constant")
        return self._add("constant", (), v.shape[0], name, value=v)

    def linear(self, x: int, W, b=None, name: str = "") -> int:
        W = as_matrix(W, name="W")
        if W.shape[1] != self.dim(x):
            raise ShapeMismatchError(f"linear W {W.shape} does not accept input of dim {self.dim(x)}")
        b = as_vector(np.zeros(W.shape[0]) if b is None else b, dim=W.shape[0], name="b")
        return self._add("linear", (x,), W.shape[0], name, W=W, b=b)

    def relu(self, x: int, name: str = "") -> int:
        return self._add("relu", (x,), self.dim(x), name)

    def add(self, *xs: int, name: str = "") -> int:
        if not xs:
            raise GraphError("sum needs at least one input")
        dims = {self.dim(x) for x in xs}
        if len(dims) != 1:
            raise ShapeMismatchError(f"sum inputs disagree on dimension: {sorted(dims)}")
        return self._add("sum", xs, dims.pop(), name)

    def scalar_affine(self, x: int, a: float, c: float = 0.0, name: str = "") -> int:
        if not (np.isfinite(a) and np.isfinite(c)):
            raise NonFiniteError("scalar_affine coefficients must be finite")
        return self._add("scalar_affine", (x,), self.dim(x), name, a=float(a), c=float(c))

    def squared_distance(self, x: int, target, weights=None, name: str = "") -> int:
        n = self.dim(x)
        target = as_vector(target, dim=n, name="target")
        weights = as_vector(np.ones(n) if weights is None else weights, dim=n, name="axis weights")
        if np.any(weights < 0):
            raise GraphError("squared distance weights must be non-negative")
        return self._add("squared_distance", (x,), 1, name, target=target, weights=weights)

    def penalty_hinge(self, x: int, center, size: float, scale: float, name: str = "") -> int:
        center = as_vector(center, dim=self.dim(x), name="hinge center")
        if size <= 0:
            raise GraphError("penalty size must be > 0")
        if scale < 0:
            raise GraphError("penalty scale must be >= 0")
        return self._add("penalty_hinge", (x,), 1, name, center=center, size=float(size), scale=float(scale))

    def concat(self, *xs: int, name: str = "") -> int:
        if not xs:
            raise GraphError("concat needs at least one input")
        return self._add("concat", xs, sum(self.dim(x) for x in xs), name)

    def slice(self, x: int, start: int, stop: int, name: str = "") -> int:
        if not (0 <= start < stop <= self.dim(x)):
            raise ShapeMismatchError(f"slice [{start}:{stop}] out of range for dim {self.dim(x)}")
        return self._add("slice", (x,), stop - start, name, start=int(start), stop=int(stop))

    def build(self, output: int, **meta) -> CompGraph:
        return CompGraph(self._nodes, output, meta)


# ---------------------------------------------------------------------
# Forward evaluation
# ---------------------------------------------------------------------
def _as_batch(batch: np.ndarray, dim: int) -> np.ndarray:
    U = np.asarray(batch, dtype=np.float64)
    if U.ndim == 1:
        U = U[None, :]
    if U.ndim != 2 or U.shape[1] != dim:
        raise ShapeMismatchError(f"expected inputs of dimension {dim}, got shape {np.shape(batch)}")
    if not np.all(np.isfinite(U)):
        raise NonFiniteError("input batch contains NaN/Inf")
    return U


def forward_node(node: GraphNode, args: List[np.ndarray], exact: bool = False) -> np.ndarray:
    """Evaluate one node on batched (N, dim) arguments."""
    p = node.params
    kind = node.kind
    if kind == "linear":
        return affine(args[0], p["W"], p["b"], exact=exact)
    if kind == "relu":
        return np.maximum(args[0], 0.0)
    if kind == "sum":
        out = args[0].copy()
        for extra in args[1:]:
            out += extra
        return out
    if kind == "scalar_affine":
        return p["a"] * args[0] + p["c"]
    if kind == "squared_distance":
        diff = args[0] - p["target"]
        return (p["weights"] * diff * diff).sum(axis=1, keepdims=True)
    if kind == "penalty_hinge":
        dist = np.sqrt(((args[0] - p["center"]) ** 2).sum(axis=1, keepdims=True))
        return p["scale"] * np.maximum(p["size"] - dist, 0.0)
    if kind == "concat":
        return np.concatenate(args, axis=1)
    if kind == "slice":
        return args[0][:, p["start"]:p["stop"]]
    raise GraphError(f"cannot evaluate node kind {kind!r}")


def evaluate(graph: CompGraph, batch: np.ndarray, watch: Optional[Iterable[int]] = None,
             exact: Optional[bool] = None) -> Evaluation:
    """
    f(u_m) for every row of batch. Nodes in `watch` get their per-sample outputs recorded.
    exact defaults to True in single-threaded mode (BABND_THREADS=1).
    """
    if exact is None:
        exact = thread_count() == 1
    U = _as_batch(batch, graph.dim)
    n = U.shape[0]
    watch_set = set(watch or ())
    acts: Dict[int, np.ndarray] = {}
    for nid in graph.order:
        node = graph.nodes[nid]
        if node.kind == "input":
            out = U
        elif node.kind == "constant":
            out = np.broadcast_to(node.params["value"], (n, node.dim))
        else:
            out = forward_node(node, [acts[i] for i in node.inputs], exact=exact)
            if not np.all(np.isfinite(out)):
                raise NonFiniteError(f"non-finite values at node {nid} ({node.kind}); weights are likely malformed")
        acts[nid] = out
    records = {nid: np.array(acts[nid]) for nid in watch_set}
    return Evaluation(values=acts[graph.output][:, 0].copy(), records=records)


# ---------------------------------------------------------------------
# Interval arithmetic
# ---------------------------------------------------------------------
def hinge_interval(lo: np.ndarray, hi: np.ndarray, center: np.ndarray, size: float,
                   scale: float) -> Tuple[np.ndarray, np.ndarray]:
    """Enclosure of scale*ReLU(size - ||x - center||) for x in [lo, hi]."""
    nearest = np.clip(center, lo, hi)
    dmin = float(np.sqrt(((nearest - center) ** 2).sum()))
    far = np.maximum(np.abs(lo - center), np.abs(hi - center))
    dmax = float(np.sqrt((far ** 2).sum()))
    return (np.array([scale * max(size - dmax, 0.0)]),
            np.array([scale * max(size - dmin, 0.0)]))


def interval_node(node: GraphNode, args: List[Tuple[np.ndarray, np.ndarray]]) -> Tuple[np.ndarray, np.ndarray]:
    p = node.params
    kind = node.kind
    if kind == "constant":
        return p["value"].copy(), p["value"].copy()
    if kind == "linear":
        lo, hi = args[0]
        W = p["W"]
        Wp, Wn = np.clip(W, 0, None), np.clip(W, None, 0)
        return Wp @ lo + Wn @ hi + p["b"], Wp @ hi + Wn @ lo + p["b"]
    if kind == "relu":
        lo, hi = args[0]
        return np.maximum(lo, 0.0), np.maximum(hi, 0.0)
    if kind == "sum":
        lo = sum(a[0] for a in args)
        hi = sum(a[1] for a in args)
        return np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64)
    if kind == "scalar_affine":
        lo, hi = args[0]
        a, c = p["a"], p["c"]
        if a >= 0:
            return a * lo + c, a * hi + c
        return a * hi + c, a * lo + c
    if kind == "squared_distance":
        lo, hi = args[0]
        t, w = p["target"], p["weights"]
        dl, dh = (lo - t) ** 2, (hi - t) ** 2
        inside = (lo <= t) & (t <= hi)
        mins = np.where(inside, 0.0, np.minimum(dl, dh))
        return np.array([(w * mins).sum()]), np.array([(w * np.maximum(dl, dh)).sum()])
    if kind == "penalty_hinge":
        lo, hi = args[0]
        return hinge_interval(lo, hi, p["center"], p["size"], p["scale"])
    if kind == "concat":
        return np.concatenate([a[0] for a in args]), np.concatenate([a[1] for a in args])
    if kind == "slice":
        lo, hi = args[0]
        return lo[p["start"]:p["stop"]].copy(), hi[p["start"]:p["stop"]].copy()
    raise GraphError(f"no interval rule for node kind {kind!r}")


def interval_forward(graph: CompGraph, box: BoxDomain) -> Dict[int, Tuple[np.ndarray, np.ndarray]]:
    """Sound [l_v, u_v] for every node over the box."""
    if box.dim != graph.dim:
        raise ShapeMismatchError(f"box has dim {box.dim}, graph expects {graph.dim}")
    bounds: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
    for nid in graph.order:
        node = graph.nodes[nid]
        if node.kind == "input":
            bounds[nid] = (box.lower.copy(), box.upper.copy())
        else:
            bounds[nid] = interval_node(node, [bounds[i] for i in node.inputs])
    return bounds
