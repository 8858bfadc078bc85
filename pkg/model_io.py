# model_io.py
# Dynamics-model weights (load / save / seeded generation), planning scenarios,
# and the unrolled planning objective f(u) built from model + horizon + cost form.

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from errors import ModelFormatError, NonFiniteWeightError, ScenarioError, ShapeMismatchError
from graph_core import BoxDomain, CompGraph, Evaluation, GraphBuilder

logger = logging.getLogger(__name__)

COST_FORMS = ("tracking", "tracking_obstacles", "pusher_penalty")
DEFAULT_PENALTY_SCALE = 100.0
DEFAULT_WEIGHT_GROWTH = 0.1


# ---------------------------------------------------------------------
# MLP dynamics model
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class MlpLayer:
    W: np.ndarray
    b: np.ndarray
    relu: bool


@dataclass(frozen=True)
class MlpModel:
    """x_{t+1} = MLP(features) (or x_t + MLP(features) when residual)."""

    layers: Tuple[MlpLayer, ...]
    residual: bool = False
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.layers:
            raise ModelFormatError("model has no layers")
        for idx, layer in enumerate(self.layers):
            if layer.W.ndim != 2 or layer.b.shape != (layer.W.shape[0],):
                raise ShapeMismatchError(f"layer {idx}: W {layer.W.shape} and b {layer.b.shape} disagree")
            if not (np.all(np.isfinite(layer.W)) and np.all(np.isfinite(layer.b))):
                raise NonFiniteWeightError(f"layer {idx} has non-finite weights")
            if idx > 0 and layer.W.shape[1] != self.layers[idx - 1].W.shape[0]:
                raise ShapeMismatchError(
                    f"layer {idx} expects {layer.W.shape[1]} inputs, previous layer emits {self.layers[idx - 1].W.shape[0]}"
                )
        if self.layers[-1].relu:
            raise ModelFormatError("final layer must be linear (no trailing ReLU)")
        if self.residual and self.output_dim > self.input_dim:
            raise ModelFormatError("residual model cannot emit more dims than it consumes")

    @property
    def input_dim(self) -> int:
        return int(self.layers[0].W.shape[1])

    @property
    def output_dim(self) -> int:
        return int(self.layers[-1].W.shape[0])

    @property
    def widths(self) -> List[int]:
        return [self.input_dim] + [int(l.W.shape[0]) for l in self.layers]

    @property
    def param_count(self) -> int:
        return int(sum(l.W.size + l.b.size for l in self.layers))

    @property
    def digest(self) -> str:
        return weights_digest(self.layers, self.residual)

    def forward(self, features: np.ndarray) -> np.ndarray:
        """Raw network output on a (N, input_dim) batch."""
        h = np.atleast_2d(np.asarray(features, dtype=np.float64))
        for layer in self.layers:
            h = h @ layer.W.T + layer.b
            if layer.relu:
                h = np.maximum(h, 0.0)
        return h


def weights_digest(layers: Sequence[MlpLayer], residual: bool) -> str:
    """SHA-256 (hex) of the canonical little-endian weight byte stream."""
    h = hashlib.sha256()
    h.update(b"residual=1" if residual else b"residual=0")
    for layer in layers:
        h.update(np.asarray(layer.W.shape, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(layer.W, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(layer.b, dtype="<f8").tobytes())
        h.update(b"\x01" if layer.relu else b"\x00")
    return h.hexdigest()


# --- file schema ---
class LayerSpec(BaseModel):
    W: List[List[float]]
    b: List[float]
    relu: bool = True


class ModelMeta(BaseModel):
    seed: Optional[int] = None
    widths: List[int] = []
    digest: Optional[str] = None
    residual: bool = False


class ModelFile(BaseModel):
    layers: List[LayerSpec] = Field(..., min_length=1)
    meta: ModelMeta = ModelMeta()


def model_from_document(doc: Dict[str, Any]) -> MlpModel:
    try:
        parsed = ModelFile.model_validate(doc)
    except ValidationError as e:
        raise ModelFormatError(f"invalid model document: {e}") from e
    layers = []
    for idx, spec in enumerate(parsed.layers):
        W = np.array(spec.W, dtype=np.float64)
        b = np.array(spec.b, dtype=np.float64)
        if W.ndim != 2:
            raise ShapeMismatchError(f"layer {idx}: W is not a rectangular matrix")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise NonFiniteWeightError(f"layer {idx} has non-finite weights")
        layers.append(MlpLayer(W, b, spec.relu))
    model = MlpModel(tuple(layers), residual=parsed.meta.residual,
                     meta={"seed": parsed.meta.seed, "widths": parsed.meta.widths})
    if parsed.meta.digest and parsed.meta.digest != model.digest:
        logger.warning(f"Model digest mismatch: file says {parsed.meta.digest[:12]}, weights hash to {model.digest[:12]}")
    model.meta["digest"] = model.digest
    return model


def model_to_document(model: MlpModel) -> Dict[str, Any]:
    return {
        "layers": [{"W": l.W.tolist(), "b": l.b.tolist(), "relu": bool(l.relu)} for l in model.layers],
        "meta": {
            "seed": model.meta.get("seed"),
            "widths": model.widths,
            "digest": model.digest,
            "residual": model.residual,
        },
    }


def load_model(path) -> MlpModel:
    """Parse a JSON model file; shapes must chain and every weight must be finite."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise ModelFormatError(f"model file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"model file {path} is not valid JSON: {e}") from e
    model = model_from_document(doc)
    logger.info(f"Loaded model {path} widths={model.widths} digest={model.digest[:12]}")
    return model


def save_model(model: MlpModel, path) -> str:
    Path(path).write_text(json.dumps(model_to_document(model)))
    return model.digest


def generate_model(seed: int, widths: Sequence[int], residual: bool = False) -> MlpModel:
    """Glorot-uniform weights and biases from the seed; ReLU after every layer but the last."""
    widths = [int(w) for w in widths]
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ModelFormatError(f"widths must list >= 2 positive sizes, got {widths}")
    rng = np.random.default_rng(seed)
    layers = []
    for idx, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        a = math.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-a, a, size=(fan_out, fan_in))
        b = rng.uniform(-a, a, size=fan_out)
        layers.append(MlpLayer(W, b, relu=idx < len(widths) - 2))
    model = MlpModel(tuple(layers), residual=residual, meta={"seed": int(seed), "widths": widths})
    model.meta["digest"] = model.digest
    return model


def expected_param_count(widths: Sequence[int]) -> int:
    return int(sum(a * b + b for a, b in zip(widths[:-1], widths[1:])))


# ---------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------
class Obstacle(BaseModel):
    center: List[float]
    size: float = Field(..., gt=0)


class Scenario(BaseModel):
    """Planning problem in meters: start/target keypoints, horizon, per-step action bounds, obstacles."""

    name: str = "scenario"
    x0: List[float]
    x_target: List[float]
    horizon: int = Field(..., ge=1)
    action_lower: List[float]
    action_upper: List[float]
    p0: List[float]
    obstacles: List[Obstacle] = []
    penalty_scale: float = Field(DEFAULT_PENALTY_SCALE, ge=0)
    weight_growth: float = DEFAULT_WEIGHT_GROWTH
    weight_start: int = 1
    tracking_weights: Optional[List[float]] = None
    axis_weights: Optional[List[float]] = None
    features: Literal["relative", "state_action"] = "relative"
    piece_radius: float = Field(0.05, gt=0)
    goal_threshold: float = Field(0.05, gt=0)

    @model_validator(mode="after")
    def _check(self):
        k = len(self.action_lower)
        if k == 0 or len(self.action_upper) != k:
            raise ValueError("action_lower/action_upper must be non-empty and equally long")
        if any(lo > hi for lo, hi in zip(self.action_lower, self.action_upper)):
            raise ValueError("action_lower must be <= action_upper elementwise")
        if len(self.p0) != k:
            raise ValueError(f"p0 must have the action dimension {k}")
        if not self.x0 or len(self.x_target) != len(self.x0):
            raise ValueError("x0 and x_target must be non-empty and equally long")
        if self.features == "relative" and len(self.x0) % k:
            raise ValueError("relative features need the state to be a list of k-dim keypoints")
        for obs in self.obstacles:
            if len(obs.center) != k:
                raise ValueError(f"obstacle centers must have dimension {k}")
        if self.axis_weights is not None and len(self.axis_weights) not in (k, len(self.x0)):
            raise ValueError("axis_weights must have length k or the state dimension")
        if self.tracking_weights is not None and len(self.tracking_weights) != self.horizon:
            raise ValueError("tracking_weights must have one entry per step")
        if any(w <= 0 for w in self.step_weights()):
            raise ValueError("tracking weights w_t must be > 0 for every step")
        values = self.x0 + self.x_target + self.action_lower + self.action_upper + self.p0
        if not all(math.isfinite(v) for v in values):
            raise ValueError("scenario contains non-finite numbers")
        return self

    @property
    def action_dim(self) -> int:
        return len(self.action_lower)

    @property
    def state_dim(self) -> int:
        return len(self.x0)

    @property
    def feature_dim(self) -> int:
        return self.state_dim + self.action_dim

    def step_weights(self) -> List[float]:
        """w_t for t = 1..H: explicit list, else the ramp 1 + growth*(t - start)."""
        if self.tracking_weights is not None:
            return list(self.tracking_weights)
        return [1.0 + self.weight_growth * (t - self.weight_start) for t in range(1, self.horizon + 1)]

    def state_axis_weights(self) -> np.ndarray:
        if self.axis_weights is None:
            return np.ones(self.state_dim)
        w = np.asarray(self.axis_weights, dtype=np.float64)
        if w.shape[0] == self.action_dim and self.state_dim != self.action_dim:
            w = np.tile(w, self.state_dim // self.action_dim)
        return w

    def action_box(self) -> BoxDomain:
        return BoxDomain(np.tile(self.action_lower, self.horizon), np.tile(self.action_upper, self.horizon))


def load_scenario(path) -> Scenario:
    try:
        return Scenario.model_validate_json(Path(path).read_text())
    except FileNotFoundError as e:
        raise ScenarioError(f"scenario file not found: {path}") from e
    except ValidationError as e:
        raise ScenarioError(f"invalid scenario {path}: {e}") from e


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(scenario.model_dump_json(indent=2))


# ---------------------------------------------------------------------
# Features + manual rollout
# ---------------------------------------------------------------------
def feature_matrix(state_dim: int, action_dim: int, mode: str) -> np.ndarray:
    """Linear map [x, p, u] -> features; relative mode subtracts p from every keypoint."""
    n, k = state_dim, action_dim
    F = np.zeros((n + k, n + k + k))
    F[:n, :n] = np.eye(n)
    if mode == "relative":
        F[:n, n:n + k] = -np.tile(np.eye(k), (n // k, 1))
    F[n:, n + k:] = np.eye(k)
    return F


def features(x: np.ndarray, p: np.ndarray, u: np.ndarray, mode: str = "relative") -> np.ndarray:
    x, p, u = (np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in (x, p, u))
    k = u.shape[1]
    if mode == "relative":
        rel = x - np.tile(p, (1, x.shape[1] // k))
        return np.concatenate([rel, u], axis=1)
    return np.concatenate([x, u], axis=1)


def step_dynamics(model: MlpModel, x: np.ndarray, p: np.ndarray, u: np.ndarray, mode: str = "relative") -> np.ndarray:
    """One model step on batched (x, p, u); p is the effector position before the action."""
    out = model.forward(features(x, p, u, mode))
    if model.residual:
        out = np.atleast_2d(x)[:, :out.shape[1]] + out
    return out


def rollout(model: MlpModel, scenario: Scenario, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """States x_0..x_H and effector positions p_0..p_H under the flattened action sequence u."""
    k, H = scenario.action_dim, scenario.horizon
    actions = np.asarray(u, dtype=np.float64).reshape(H, k)
    xs = [np.asarray(scenario.x0, dtype=np.float64)]
    ps = [np.asarray(scenario.p0, dtype=np.float64)]
    for t in range(H):
        xs.append(step_dynamics(model, xs[-1], ps[-1], actions[t], scenario.features)[0])
        ps.append(ps[-1] + actions[t])
    return np.array(xs), np.array(ps)


def hinge(point: np.ndarray, center: np.ndarray, size: float, scale: float) -> float:
    return scale * max(size - float(np.linalg.norm(np.asarray(point) - np.asarray(center))), 0.0)


def penalty_terms(scenario: Scenario, cost_form: str, x: np.ndarray, p: np.ndarray) -> float:
    """Sum of hinge penalties at one step (0 means collision-free)."""
    k = scenario.action_dim
    lam = scenario.penalty_scale
    total = 0.0
    keypoints = np.asarray(x).reshape(-1, k) if scenario.features == "relative" else np.zeros((0, k))
    if cost_form == "tracking_obstacles":
        for obs in scenario.obstacles:
            total += hinge(p, obs.center, obs.size, lam)
            for kp in keypoints:
                total += hinge(kp, obs.center, obs.size, lam)
    elif cost_form == "pusher_penalty":
        for kp in keypoints:
            total += hinge(p, kp, scenario.piece_radius, lam)
    return total


def step_costs(model: MlpModel, scenario: Scenario, cost_form: str, u: np.ndarray) -> np.ndarray:
    """c_t for t = 1..H computed by rolling the model forward directly (no graph)."""
    xs, ps = rollout(model, scenario, u)
    target = np.asarray(scenario.x_target)
    axis_w = scenario.state_axis_weights()
    costs = []
    for t, w_t in enumerate(scenario.step_weights(), start=1):
        c = w_t * float((axis_w * (xs[t] - target) ** 2).sum())
        c += penalty_terms(scenario, cost_form, xs[t], ps[t])
        costs.append(c)
    return np.array(costs)


# ---------------------------------------------------------------------
# Objective construction
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class ObjectiveSpec:
    scenario: Scenario
    model: MlpModel
    cost_form: str = "tracking"

    def __post_init__(self):
        if self.cost_form not in COST_FORMS:
            raise ScenarioError(f"unknown cost form {self.cost_form!r}; expected one of {COST_FORMS}")
        if self.cost_form == "tracking_obstacles" and not self.scenario.obstacles:
            raise ScenarioError("tracking_obstacles cost needs at least one obstacle")
        if self.cost_form in ("tracking_obstacles", "pusher_penalty") and self.scenario.features != "relative":
            raise ScenarioError(f"{self.cost_form} cost needs keypoint (relative) states")
        if self.model.input_dim != self.scenario.feature_dim:
            raise ShapeMismatchError(
                f"model takes {self.model.input_dim} inputs but scenario features have {self.scenario.feature_dim}"
            )
        expected_out = self.scenario.state_dim
        if self.model.output_dim != expected_out:
            raise ShapeMismatchError(f"model emits {self.model.output_dim} dims, scenario state has {expected_out}")


def build_objective(spec: ObjectiveSpec) -> Tuple[CompGraph, BoxDomain]:
    """
    Unroll the dynamics H times and sum the per-step costs into one scalar graph.
    The single input node is u in R^{kH}; the box repeats the per-step action bounds.
    """
    sc, model = spec.scenario, spec.model
    n, k, H = sc.state_dim, sc.action_dim, sc.horizon
    F = feature_matrix(n, k, sc.features)
    first_W = model.layers[0].W @ F
    target = np.asarray(sc.x_target)
    axis_w = sc.state_axis_weights()
    lam = sc.penalty_scale

    g = GraphBuilder()
    u = g.input(k * H)
    x_prev = g.constant(sc.x0, name="x0")
    q_prev = g.constant(sc.p0, name="p0")
    states, positions, last_relus, hinges, step_cost_ids = [], [], [], [], []
    for t, w_t in enumerate(sc.step_weights()):
        u_t = g.slice(u, t * k, (t + 1) * k, name=f"u{t}")
        h = g.concat(x_prev, q_prev, u_t)
        last_relu = None
        for idx, layer in enumerate(model.layers):
            W = first_W if idx == 0 else layer.W
            h = g.linear(h, W, layer.b, name=f"step{t + 1}.fc{idx}")
            if layer.relu:
                h = g.relu(h, name=f"step{t + 1}.relu{idx}")
                last_relu = h
        x_next = g.add(x_prev, h, name=f"x{t + 1}") if model.residual else h
        q_next = g.add(q_prev, u_t, name=f"p{t + 1}")

        terms = [g.scalar_affine(g.squared_distance(x_next, target, axis_w), w_t, name=f"track{t + 1}")]
        if spec.cost_form == "tracking_obstacles":
            for oi, obs in enumerate(sc.obstacles):
                terms.append(g.penalty_hinge(q_next, obs.center, obs.size, lam, name=f"hinge.p{t + 1}.o{oi}"))
                for j in range(n // k):
                    kp = g.slice(x_next, j * k, (j + 1) * k)
                    terms.append(g.penalty_hinge(kp, obs.center, obs.size, lam, name=f"hinge.x{t + 1}.k{j}.o{oi}"))
        elif spec.cost_form == "pusher_penalty":
            diff_W = np.hstack([np.eye(k), -np.eye(k)])
            for j in range(n // k):
                kp = g.slice(x_next, j * k, (j + 1) * k)
                gap = g.linear(g.concat(q_next, kp), diff_W)
                terms.append(g.penalty_hinge(gap, np.zeros(k), sc.piece_radius, lam, name=f"hinge.p{t + 1}.piece{j}"))
        hinges.extend(terms[1:])
        step_cost_ids.append(g.add(*terms, name=f"cost{t + 1}") if len(terms) > 1 else terms[0])
        states.append(x_next)
        positions.append(q_next)
        if last_relu is not None:
            last_relus.append(last_relu)
        x_prev, q_prev = x_next, q_next

    total = g.add(*step_cost_ids, name="f") if len(step_cost_ids) > 1 else step_cost_ids[0]
    box = sc.action_box()
    graph = g.build(
        total,
        box=box,
        horizon=H,
        action_dim=k,
        cost_form=spec.cost_form,
        states=states,
        positions=positions,
        last_relus=last_relus,
        hinges=hinges,
        step_costs=step_cost_ids,
    )
    logger.debug(f"Built objective graph: {graph} ({spec.cost_form}, H={H})")
    return graph, box


# ---------------------------------------------------------------------
# Synthetic separable benchmark
# ---------------------------------------------------------------------
class SeparableObjective:
    """f(u) = sum_i g(u_i) with g(x) = 5x^2 + cos(50x) over [-1, 1]^d."""

    separable = True

    def __init__(self, d: int, quad: float = 5.0, freq: float = 50.0, low: float = -1.0, high: float = 1.0):
        if d < 1:
            raise ScenarioError("synthetic dimension must be >= 1")
        self.d = int(d)
        self.quad = float(quad)
        self.freq = float(freq)
        self._box = BoxDomain.uniform(self.d, low, high)

    @property
    def dim(self) -> int:
        return self.d

    def root_box(self) -> BoxDomain:
        return self._box

    def term(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self.quad * x * x + np.cos(self.freq * x)

    def term_derivative(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return 2.0 * self.quad * x - self.freq * np.sin(self.freq * x)

    def values(self, batch: np.ndarray) -> np.ndarray:
        U = np.atleast_2d(np.asarray(batch, dtype=np.float64))
        if U.shape[1] != self.d:
            raise ShapeMismatchError(f"expected inputs of dimension {self.d}, got {U.shape[1]}")
        return self.term(U).sum(axis=1)

    def evaluate(self, batch: np.ndarray, watch=None, exact=None) -> Evaluation:
        return Evaluation(values=self.values(batch))

    def gradient(self, batch: np.ndarray) -> np.ndarray:
        return self.term_derivative(np.atleast_2d(batch))

    def __repr__(self) -> str:
        return f"SeparableObjective(d={self.d})"


def build_synthetic(d: int) -> SeparableObjective:
    return SeparableObjective(d)


def random_objective(seed: int, d: int = 2, depth: int = 2, width: int = 8,
                     head: str = "linear") -> Tuple[CompGraph, BoxDomain]:
    """
    Seeded ReLU MLP over [-1, 1]^d with a scalar head: 'linear' (one output unit),
    'tracking' (squared distance of a 2-unit output to a random target) or
    'affine' (no ReLU layers at all).
    """
    if head not in ("linear", "tracking", "affine"):
        raise ScenarioError(f"unknown head {head!r}")
    rng = np.random.default_rng(seed)
    g = GraphBuilder()
    h = g.input(d)
    fan_in = d
    for _ in range(depth):
        h = g.linear(h, rng.normal(0.0, 1.0 / math.sqrt(fan_in), (width, fan_in)), rng.normal(0.0, 0.5, width))
        if head != "affine":
            h = g.relu(h)
        fan_in = width
    if head == "tracking":
        h = g.linear(h, rng.normal(0.0, 1.0 / math.sqrt(fan_in), (2, fan_in)), rng.normal(0.0, 0.5, 2))
        out = g.squared_distance(h, rng.normal(0.0, 0.5, 2))
    else:
        out = g.linear(h, rng.normal(0.0, 1.0 / math.sqrt(fan_in), (1, fan_in)), rng.normal(0.0, 0.5, 1))
    box = BoxDomain.uniform(d, -1.0, 1.0)
    return g.build(out, box=box), box


# ---------------------------------------------------------------------
# Preset scenarios (seeded models stand in for trained ones)
# ---------------------------------------------------------------------
PRESETS = ("pushing", "merging", "routing", "sorting")


def _square(center: Sequence[float], half: float) -> List[float]:
    cx, cy = center
    return [cx - half, cy - half, cx + half, cy - half, cx + half, cy + half, cx - half, cy + half]


def preset_scenario(name: str, horizon: int = 5) -> Tuple[Scenario, List[int], str]:
    """-> (scenario, model widths, cost form) for one of PRESETS."""
    if name == "pushing":
        sc = Scenario(
            name="pushing",
            x0=_square((0.0, 0.0), 0.05),
            x_target=_square((0.3, 0.1), 0.05),
            horizon=horizon,
            action_lower=[-0.08, -0.08],
            action_upper=[0.08, 0.08],
            p0=[-0.1, 0.0],
            obstacles=[Obstacle(center=[0.15, 0.05], size=0.04)],
        )
        return sc, [10, 128, 256, 256, 128, 8], "tracking_obstacles"
    if name == "merging":
        a = [0.0, 0.0, 0.05, 0.0, 0.0, 0.05]
        b = [0.3, 0.0, 0.35, 0.0, 0.3, 0.05]
        sc = Scenario(
            name="merging",
            x0=a + b,
            x_target=[v + 0.1 for v in a] + [v - 0.1 for v in b],
            horizon=horizon,
            action_lower=[-0.08, -0.08],
            action_upper=[0.08, 0.08],
            p0=[0.15, -0.1],
        )
        return sc, [14, 128, 256, 256, 128, 12], "tracking"
    if name == "routing":
        rope = [c for i in range(10) for c in (0.03 * i, 0.0, 0.0)]
        sc = Scenario(
            name="routing",
            x0=rope,
            x_target=[c for i in range(10) for c in (0.03 * i, 0.15, 0.05)],
            horizon=horizon,
            action_lower=[-0.1, -0.1, -0.1],
            action_upper=[0.1, 0.1, 0.1],
            p0=[0.27, 0.0, 0.0],
            obstacles=[Obstacle(center=[0.15, 0.08, 0.0], size=0.03), Obstacle(center=[0.15, 0.22, 0.0], size=0.03)],
            axis_weights=[1.0, 1.0, 2.0],
        )
        return sc, [33, 128, 128, 30], "tracking_obstacles"
    if name == "sorting":
        pieces = [0.0, 0.0, 0.04, 0.0, 0.0, 0.04, 0.04, 0.04]
        sc = Scenario(
            name="sorting",
            x0=pieces,
            x_target=[-0.1, 0.0, 0.14, 0.0, -0.1, 0.04, 0.14, 0.04],
            horizon=horizon,
            action_lower=[-0.1, -0.1],
            action_upper=[0.1, 0.1],
            p0=[0.02, -0.1],
            piece_radius=0.03,
        )
        return sc, [10, 128, 256, 256, 128, 8], "pusher_penalty"
    raise ScenarioError(f"unknown preset {name!r}; expected one of {PRESETS}")
