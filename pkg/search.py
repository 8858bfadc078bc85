# search.py
# Sampling-based searchers (decentralized CEM, MPPI, projected GD) that return the best
# objective and input per box and record watched-node activation ranges for bounding.

import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator

from errors import BudgetError, PlannerError, SearchError
from graph_core import BoxDomain, CompGraph
from settings import thread_count

logger = logging.getLogger(__name__)

SEARCHER_KINDS = ("cem", "mppi", "gd")

# Baseline hyper-parameters per task: (total samples, iterations) per searcher + method knobs
_TASK_PRESETS = {
    "pushing": {
        "gd": (320000, 16), "mppi": (320000, 20), "cem": (320000, 20),
        "temperature": 20.0, "temperature_ratios": [0.1, 0.5, 1, 1.5, 2],
        "noise_std": 0.15, "noise_ratios": [0.1, 0.5, 1, 1.5, 2], "jitter": 0.001,
    },
    "merging": {
        "gd": (160000, 18), "mppi": (160000, 22), "cem": (160000, 55),
        "temperature": 20.0, "temperature_ratios": [0.1, 0.5, 1, 1.5, 2],
        "noise_std": 0.15, "noise_ratios": [0.1, 0.5, 1, 1.5, 2], "jitter": 0.0005,
    },
    "routing": {
        "gd": (50000, 16), "mppi": (64000, 50), "cem": (64000, 50),
        "temperature": 20.0, "temperature_ratios": [0.1, 0.5, 1, 5],
        "noise_std": 0.12, "noise_ratios": [0.1, 0.5, 1, 2, 5], "jitter": 0.001,
    },
    "sorting": {
        "gd": (24000, 15), "mppi": (32000, 18), "cem": (32000, 16),
        "temperature": 50.0, "temperature_ratios": [0.1, 1, 5],
        "noise_std": 0.3, "noise_ratios": [0.5, 1, 1.5], "jitter": 0.0005,
    },
}
GD_STEP_RATIOS = [0.05, 0.1, 0.25, 0.5, 0.75, 1, 1.5, 2, 5, 10]


# ---------------------------------------------------------------------
# Config + report
# ---------------------------------------------------------------------
class SearcherConfig(BaseModel):
    """
    Searcher settings. Standard deviations, jitter and step sizes are relative to
    the width of the box being searched, so the same config works on any subdomain.
    """

    kind: Literal["cem", "mppi", "gd"] = "cem"
    samples: int = Field(default=200, ge=1, description="samples per iteration, all agents/instances together")
    iterations: int = Field(default=10, ge=1)
    seed: int = Field(default=0, ge=0)
    top_k: int = Field(default=512, ge=1)
    # CEM
    agents: int = Field(default=4, ge=1)
    elites: int = Field(default=10, ge=1)
    jitter: float = Field(default=1e-3, gt=0)
    init_std: float = Field(default=0.5, gt=0)
    # MPPI
    temperature: float = Field(default=20.0, gt=0)
    temperature_ratios: List[float] = Field(default_factory=lambda: [1.0])
    noise_std: float = Field(default=0.15, gt=0)
    noise_ratios: List[float] = Field(default_factory=lambda: [1.0])
    # GD
    step_size: float = Field(default=0.01, gt=0)
    step_ratios: List[float] = Field(default_factory=lambda: [1.0])

    @field_validator("temperature_ratios", "noise_ratios", "step_ratios")
    @classmethod
    def _positive_ratios(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("ratio grid must not be empty")
        if any(r <= 0 for r in v):
            raise ValueError("ratios must be > 0")
        return v

    @classmethod
    def preset(cls, task: str, kind: str = "cem", scale: float = 1.0, **overrides) -> "SearcherConfig":
        """
        Baseline settings for one of the task columns; scale < 1 shrinks the sample
        budget for desk runs while keeping iteration counts and grids.
        """
        if task not in _TASK_PRESETS:
            raise ValueError(f"unknown task preset {task!r}; expected one of {sorted(_TASK_PRESETS)}")
        if kind not in SEARCHER_KINDS:
            raise ValueError(f"unknown searcher {kind!r}; expected one of {SEARCHER_KINDS}")
        p = _TASK_PRESETS[task]
        total, iters = p[kind]
        values = dict(
            kind=kind,
            samples=max(1, int(round(total * scale / iters))),
            iterations=iters,
            agents=10,
            elites=10,
            jitter=p["jitter"],
            temperature=p["temperature"],
            temperature_ratios=list(p["temperature_ratios"]),
            noise_std=p["noise_std"],
            noise_ratios=list(p["noise_ratios"]),
            step_size=0.01,
            step_ratios=list(GD_STEP_RATIOS),
        )
        values.update(overrides)
        return cls(**values)

    @property
    def budget(self) -> int:
        return self.samples * self.iterations


@dataclass
class SearchReport:
    uf: float
    best: np.ndarray
    top_inputs: np.ndarray
    top_values: np.ndarray
    activations: Dict[int, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    samples: int = 0
    history: List[float] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @classmethod
    def failed(cls, dim: int, message: str) -> "SearchReport":
        return cls(
            uf=float("inf"),
            best=np.full(dim, np.nan),
            top_inputs=np.zeros((0, dim)),
            top_values=np.zeros(0),
            error=message,
        )


class _Tracker:
    """Clamps, evaluates and records every sample a searcher proposes, up to limit samples."""

    def __init__(self, objective, box: BoxDomain, watch: Sequence[int], top_k: int, exact: Optional[bool],
                 limit: Optional[int] = None):
        self.objective = objective
        self.box = box
        self.watch = list(watch or ())
        self.top_k = top_k
        self.exact = exact
        self.best_value = float("inf")
        self.best_input = box.center.copy()
        self.top_inputs = np.zeros((0, box.dim))
        self.top_values = np.zeros(0)
        self.mins: Dict[int, np.ndarray] = {}
        self.maxs: Dict[int, np.ndarray] = {}
        self.count = 0
        self.limit = sys.maxsize if limit is None else max(int(limit), 0)
        self.history: List[float] = []

    @property
    def room(self) -> int:
        return self.limit - self.count

    @property
    def exhausted(self) -> bool:
        return self.count >= self.limit

    def evaluate(self, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        X = self.box.clamp(np.atleast_2d(X))[: self.room]
        if X.shape[0] == 0:
            return X, np.zeros(0)
        ev = self.objective.evaluate(X, watch=self.watch, exact=self.exact)
        vals = np.asarray(ev.values, dtype=np.float64)
        self._record(X, vals, ev.records)
        return X, vals

    def record(self, X: np.ndarray, vals: np.ndarray, records: Optional[Dict[int, np.ndarray]] = None) -> None:
        n = max(self.room, 0)
        self._record(self.box.clamp(np.atleast_2d(X))[:n], np.asarray(vals, dtype=np.float64)[:n],
                     {nid: acts[:n] for nid, acts in (records or {}).items()})

    def _record(self, X: np.ndarray, vals: np.ndarray, records: Dict[int, np.ndarray]) -> None:
        if X.shape[0] == 0:
            return
        self.count += X.shape[0]
        i = int(np.argmin(vals))
        if vals[i] < self.best_value:
            self.best_value = float(vals[i])
            self.best_input = X[i].copy()
        allx = np.vstack([self.top_inputs, X])
        allv = np.concatenate([self.top_values, vals])
        keep = np.argsort(allv, kind="stable")[: self.top_k]
        self.top_inputs, self.top_values = allx[keep], allv[keep]
        for nid, acts in records.items():
            lo, hi = acts.min(axis=0), acts.max(axis=0)
            if nid in self.mins:
                self.mins[nid] = np.minimum(self.mins[nid], lo)
                self.maxs[nid] = np.maximum(self.maxs[nid], hi)
            else:
                self.mins[nid], self.maxs[nid] = lo, hi

    def end_iteration(self) -> None:
        self.history.append(self.best_value)

    def report(self) -> SearchReport:
        return SearchReport(
            uf=self.best_value,
            best=self.best_input,
            top_inputs=self.top_inputs,
            top_values=self.top_values,
            activations={nid: (self.mins[nid], self.maxs[nid]) for nid in self.mins},
            samples=self.count,
            history=list(self.history),
        )


# ---------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------
def value_and_grad(graph: CompGraph, batch: np.ndarray, exact: Optional[bool] = None,
                   records: Optional[Dict[int, np.ndarray]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Reverse-mode gradient of f; ReLU and hinge kinks take subgradient 0.
    Pass a dict as records to receive every node's forward activations.
    """
    ev = graph.evaluate(batch, watch=range(len(graph.nodes)), exact=exact)
    acts = ev.records
    if records is not None:
        records.update(acts)
    n = ev.values.shape[0]
    grads: Dict[int, np.ndarray] = {graph.output: np.ones((n, 1))}

    def push(src: int, g: np.ndarray) -> None:
        grads[src] = grads[src] + g if src in grads else g

    for nid in reversed(graph.order):
        if nid not in grads:
            continue
        node = graph.nodes[nid]
        G = grads[nid] if nid == graph.input_id else grads.pop(nid)
        p = node.params
        if node.kind in ("input", "constant"):
            continue
        src = node.inputs[0]
        if node.kind == "linear":
            push(src, G @ p["W"])
        elif node.kind == "relu":
            push(src, G * (acts[src] > 0))
        elif node.kind == "sum":
            for s in node.inputs:
                push(s, G)
        elif node.kind == "scalar_affine":
            push(src, p["a"] * G)
        elif node.kind == "squared_distance":
            push(src, G * 2.0 * p["weights"] * (acts[src] - p["target"]))
        elif node.kind == "penalty_hinge":
            diff = acts[src] - p["center"]
            dist = np.sqrt((diff ** 2).sum(axis=1, keepdims=True))
            live = (p["size"] - dist > 0) & (dist > 0)
            safe = np.where(dist > 0, dist, 1.0)
            push(src, np.where(live, -p["scale"] * G * diff / safe, 0.0))
        elif node.kind == "concat":
            col = 0
            for s in node.inputs:
                width = graph.nodes[s].dim
                push(s, G[:, col:col + width])
                col += width
        elif node.kind == "slice":
            full = np.zeros((n, graph.nodes[src].dim))
            full[:, p["start"]:p["stop"]] = G
            push(src, full)
    grad = grads.get(graph.input_id, np.zeros((n, graph.dim)))
    return ev.values, grad


def _finite_difference(objective, X: np.ndarray, box: BoxDomain, exact: Optional[bool]) -> Tuple[np.ndarray, np.ndarray]:
    h = np.maximum(box.widths * 1e-6, 1e-9)
    base = objective.evaluate(X, exact=exact).values
    grad = np.zeros_like(X)
    for j in range(X.shape[1]):
        step = X.copy()
        step[:, j] += h[j]
        grad[:, j] = (objective.evaluate(step, exact=exact).values - base) / h[j]
    return base, grad


def objective_gradient(objective, X: np.ndarray, box: BoxDomain, exact: Optional[bool] = None,
                       watch: Sequence[int] = ()) -> Tuple[np.ndarray, np.ndarray, Dict[int, np.ndarray]]:
    """-> (values, gradients, activations of the watched nodes)."""
    if isinstance(objective, CompGraph):
        acts: Dict[int, np.ndarray] = {}
        vals, grad = value_and_grad(objective, X, exact=exact, records=acts)
        return vals, grad, {nid: acts[nid] for nid in watch}
    if hasattr(objective, "gradient"):
        return objective.values(X), objective.gradient(X), {}
    vals, grad = _finite_difference(objective, X, box, exact)
    return vals, grad, {}


# ---------------------------------------------------------------------
# Searchers
# ---------------------------------------------------------------------
def _seed_population(tracker: _Tracker, warm_start: Optional[np.ndarray], init_samples: Optional[np.ndarray]) -> None:
    seeds = []
    if warm_start is not None:
        seeds.append(np.atleast_2d(np.asarray(warm_start, dtype=np.float64)))
    if init_samples is not None and len(init_samples):
        seeds.append(np.atleast_2d(np.asarray(init_samples, dtype=np.float64)))
    if seeds:
        tracker.evaluate(np.vstack(seeds))


def _run_cem(tracker: _Tracker, box: BoxDomain, cfg: SearcherConfig, rng: np.random.Generator) -> None:
    d = box.dim
    per_agent = max(1, cfg.samples // cfg.agents)
    n_elite = min(cfg.elites, per_agent + 1)
    means = box.sample(rng, cfg.agents)
    if np.isfinite(tracker.best_value):
        means[0] = tracker.best_input
    stds = np.broadcast_to(cfg.init_std * box.widths, (cfg.agents, d)).copy()
    floor = cfg.jitter * box.widths ** 2
    for _ in range(cfg.iterations):
        if tracker.exhausted:
            break
        noise = rng.standard_normal((cfg.agents, per_agent, d))
        pop = box.clamp((means[:, None, :] + stds[:, None, :] * noise).reshape(-1, d))
        pop, vals = tracker.evaluate(pop)
        if pop.shape[0] < cfg.agents * per_agent:
            # budget ran out mid-population
            tracker.end_iteration()
            break
        pop = pop.reshape(cfg.agents, per_agent, d)
        vals = vals.reshape(cfg.agents, per_agent)
        for a in range(cfg.agents):
            # incumbent re-enters every agent's elite candidates
            cand = np.vstack([pop[a], tracker.best_input[None, :]])
            cv = np.append(vals[a], tracker.best_value)
            elite = cand[np.argsort(cv, kind="stable")[:n_elite]]
            means[a] = elite.mean(axis=0)
            stds[a] = np.sqrt(np.maximum(elite.var(axis=0), floor))
        tracker.end_iteration()


def _run_mppi(tracker: _Tracker, box: BoxDomain, cfg: SearcherConfig, rng: np.random.Generator) -> None:
    grid = [(t, s) for t in cfg.temperature_ratios for s in cfg.noise_ratios]
    per_instance = max(1, cfg.samples // len(grid))
    start = tracker.best_input.copy() if np.isfinite(tracker.best_value) else box.center.copy()
    means = np.tile(start, (len(grid), 1))
    for _ in range(cfg.iterations):
        if tracker.exhausted:
            break
        for i, (t_ratio, s_ratio) in enumerate(grid):
            std = cfg.noise_std * s_ratio * box.widths
            X, vals = tracker.evaluate(means[i] + std * rng.standard_normal((per_instance, box.dim)))
            if X.shape[0] == 0:
                break
            temp = cfg.temperature * t_ratio
            w = np.exp(-(vals - vals.min()) / temp)
            means[i] = box.clamp((w[:, None] * X).sum(axis=0) / w.sum())
        tracker.end_iteration()


def _run_gd(tracker: _Tracker, box: BoxDomain, cfg: SearcherConfig, rng: np.random.Generator) -> None:
    ratios = cfg.step_ratios
    starts = max(1, cfg.samples // len(ratios))
    X0 = box.sample(rng, starts)
    if np.isfinite(tracker.best_value):
        X0[0] = tracker.best_input
    points = [X0.copy() for _ in ratios]
    for _ in range(cfg.iterations):
        # a sweep only runs when every start can still be scored
        if tracker.room < starts * len(ratios):
            break
        for i, ratio in enumerate(ratios):
            vals, grad, acts = objective_gradient(tracker.objective, points[i], box, tracker.exact, tracker.watch)
            tracker.record(points[i], vals, acts)
            points[i] = box.clamp(points[i] - cfg.step_size * ratio * box.widths * grad)
        tracker.end_iteration()
    # final iterates were never scored
    tracker.evaluate(np.vstack(points))


_RUNNERS = {"cem": _run_cem, "mppi": _run_mppi, "gd": _run_gd}


def search(objective, box: BoxDomain, config: Optional[SearcherConfig] = None,
           warm_start: Optional[np.ndarray] = None, init_samples: Optional[np.ndarray] = None,
           watch: Optional[Sequence[int]] = None, seed: Optional[int] = None,
           exact: Optional[bool] = None, limit: Optional[int] = None) -> SearchReport:
    """
    Search one box. Every proposed sample is clamped into the box and scored; the warm
    start (and any routed init samples) are scored first, so uf never exceeds theirs.
    At most limit samples are scored, the warm start included.
    """
    cfg = config or SearcherConfig()
    if cfg.budget < 1:
        raise BudgetError("search budget must be at least one sample")
    if box.dim != objective.dim:
        raise SearchError(f"box has dim {box.dim}, objective expects {objective.dim}")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    tracker = _Tracker(objective, box, watch or (), cfg.top_k, exact, limit)
    _seed_population(tracker, warm_start, init_samples)
    _RUNNERS[cfg.kind](tracker, box, cfg, rng)
    return tracker.report()


def batch_search(objective, boxes: Sequence[BoxDomain], config: Optional[SearcherConfig] = None,
                 warm_starts: Optional[Sequence[Optional[np.ndarray]]] = None,
                 init_samples: Optional[Sequence[Optional[np.ndarray]]] = None,
                 watch: Optional[Sequence[int]] = None, seeds: Optional[Sequence[int]] = None,
                 exact: Optional[bool] = None, limits: Optional[Sequence[Optional[int]]] = None) -> List[SearchReport]:
    """
    Independent searches, one per box, seeded with seed XOR box index unless seeds are given.
    limits caps the samples scored per box.
    A failing box yields a report with error set and uf = inf; siblings still run.
    """
    cfg = config or SearcherConfig()
    n = len(boxes)
    if n == 0:
        return []
    seeds = list(seeds) if seeds is not None else [cfg.seed ^ i for i in range(n)]
    warm_starts = list(warm_starts) if warm_starts is not None else [None] * n
    init_samples = list(init_samples) if init_samples is not None else [None] * n
    limits = list(limits) if limits is not None else [None] * n

    def run_one(i: int) -> SearchReport:
        try:
            return search(objective, boxes[i], cfg, warm_start=warm_starts[i], init_samples=init_samples[i],
                          watch=watch, seed=seeds[i], exact=exact, limit=limits[i])
        except (PlannerError, ValueError, FloatingPointError) as e:
            logger.warning(f"Search failed for box {i}: {e}")
            return SearchReport.failed(boxes[i].dim, str(e))

    t0 = time.time()
    workers = min(thread_count(), n)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(run_one, range(n)))
    else:
        reports = [run_one(i) for i in range(n)]
    logger.debug(f"batch_search: {n} boxes, {sum(r.samples for r in reports)} samples in {time.time() - t0:.3f}s")
    return reports
