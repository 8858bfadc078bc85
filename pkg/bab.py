# bab.py
# Branch and bound over the action box: domain pool, pick-out and split heuristics,
# bounding (linear bound propagation or the exact separable bounder), pruning and the plan loop.

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from crown import BOUND_MODES, SOUND_MODES, lower_bound, watch_nodes
from errors import BoundError, PlannerError
from graph_core import BoxDomain, CompGraph
from search import SearcherConfig, SearchReport, batch_search
from settings import thread_count

logger = logging.getLogger(__name__)

MIN_WIDTH = 1e-6
TRACE_COLUMNS = ("iter", "uf", "min_lf", "pruned_vol", "selected_vol", "pool_size", "samples", "wall_ms")
BOUNDING_CHOICES = ("auto", "exact", "zero") + BOUND_MODES
SPLIT_HEURISTICS = ("product", "width", "count")

# Critical-point scan for the separable bounder
_SCAN_STEP = 1e-4
_BISECT_ROUNDS = 60


# ---------------------------------------------------------------------
# Config + records
# ---------------------------------------------------------------------
class PlannerConfig(BaseModel):
    batch_size: int = Field(default=8, ge=1, description="subdomains picked per iteration (n)")
    eta: float = Field(default=0.75, ge=0.0, le=1.0, description="exploit share n1/n")
    temperature: float = Field(default=0.05, gt=0.0, description="softmax temperature over scaled lf")
    top_percent: float = Field(default=1.0, gt=0.0, le=100.0, description="share of top samples used by split")
    searcher: SearcherConfig = Field(default_factory=SearcherConfig)
    bounding: Literal["auto", "exact", "zero", "full-crown", "early-stop+empirical", "early-stop+interval"] = "auto"
    split_heuristic: Literal["product", "width", "count"] = "product"
    score_bound_points: bool = Field(default=True, description="score the input attaining each box's bound")
    stop_rule: Literal["last-relu", "every-step-output", "none"] = "last-relu"
    max_iterations: int = Field(default=20, ge=0)
    timeout: Optional[float] = Field(default=None, gt=0, description="wall-clock seconds")
    target: Optional[float] = Field(default=None, description="stop once uf <= target")
    max_samples: Optional[int] = Field(default=None, ge=1, description="total sample budget, bound points included")
    gap_tolerance: Optional[float] = Field(default=None, ge=0, description="stop once uf - min lf <= this")
    seed: int = Field(default=0, ge=0)
    min_width: float = Field(default=MIN_WIDTH, gt=0)

    @classmethod
    def base(cls, **overrides) -> "PlannerConfig":
        """eta=0.75, T=0.05, w=1."""
        return cls(**{"eta": 0.75, "temperature": 0.05, "top_percent": 1.0, **overrides})


@dataclass
class SubdomainRecord:
    box: BoxDomain
    lf: float = -math.inf
    uf: float = math.inf
    best: Optional[np.ndarray] = None
    top_inputs: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    top_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    depth: int = 0
    parent: Optional[int] = None
    id: int = 0
    warm_start: Optional[np.ndarray] = None
    init_samples: Optional[np.ndarray] = None

    def absorb(self, report: SearchReport) -> None:
        self.uf = report.uf
        self.best = report.best if report.ok else self.warm_start
        self.top_inputs = report.top_inputs
        self.top_values = report.top_values


@dataclass
class TraceRow:
    iter: int
    uf: float
    min_lf: float
    pruned_vol: float
    selected_vol: float
    pool_size: int
    samples: int
    wall_ms: float

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, c) for c in TRACE_COLUMNS)


class DomainPool:
    """Candidate subdomains plus the running incumbent and volume bookkeeping."""

    def __init__(self, root: BoxDomain):
        self.root = root
        self.records: List[SubdomainRecord] = []
        self.incumbent_uf = math.inf
        self.incumbent: Optional[np.ndarray] = None
        self.pruned_log_volume = -math.inf
        self.retired_log_volume = -math.inf
        self._next_id = 0

    def __len__(self) -> int:
        return len(self.records)

    def new_id(self) -> int:
        self._next_id += 1
        return self._next_id - 1

    def add(self, records: Sequence[SubdomainRecord]) -> None:
        self.records.extend(records)

    def observe(self, uf: float, best: Optional[np.ndarray]) -> bool:
        if best is not None and uf < self.incumbent_uf:
            self.incumbent_uf = float(uf)
            self.incumbent = np.array(best, dtype=np.float64)
            return True
        return False

    def log_volume(self, box: BoxDomain) -> float:
        return box.log_volume_ratio(self.root)

    def retire(self, record: SubdomainRecord) -> None:
        self.retired_log_volume = float(np.logaddexp(self.retired_log_volume, self.log_volume(record.box)))

    @property
    def pruned_volume(self) -> float:
        return math.exp(self.pruned_log_volume)

    @property
    def pool_volume(self) -> float:
        if not self.records:
            return 0.0
        return math.exp(float(np.logaddexp.reduce([self.log_volume(r.box) for r in self.records])))

    @property
    def retired_volume(self) -> float:
        return math.exp(self.retired_log_volume)

    @property
    def min_lf(self) -> float:
        return min((r.lf for r in self.records), default=math.inf)


# ---------------------------------------------------------------------
# Pick-out
# ---------------------------------------------------------------------
def pick_out(pool: DomainPool, n: int, eta: float, temperature: float,
             rng: np.random.Generator) -> List[SubdomainRecord]:
    """
    Remove and return n records: round(eta*n) with the smallest uf, the rest sampled
    without replacement with p ~ exp(-lf_scaled / T) over min-max scaled lf.
    """
    if not pool.records:
        return []
    n = min(n, len(pool.records))
    n1 = min(max(int(math.floor(eta * n + 0.5)), 0), n)
    order = sorted(range(len(pool.records)), key=lambda i: (pool.records[i].uf, pool.records[i].id))
    chosen = order[:n1]
    rest = order[n1:]
    n2 = n - n1
    if n2 > 0:
        lf = np.array([pool.records[i].lf for i in rest], dtype=np.float64)
        finite = np.isfinite(lf)
        if finite.any():
            lf = np.where(finite, lf, np.where(lf < 0, lf[finite].min(), lf[finite].max()))
        else:
            lf = np.zeros_like(lf)
        span = lf.max() - lf.min()
        scaled = (lf - lf.min()) / span if span > 0 else np.zeros_like(lf)
        logits = -scaled / temperature
        p = np.exp(logits - logits.max())
        p = np.maximum(p, 1e-300)
        p /= p.sum()
        picks = rng.choice(len(rest), size=n2, replace=False, p=p)
        chosen.extend(rest[i] for i in picks)
    chosen_set = set(chosen)
    selected = [pool.records[i] for i in chosen]
    pool.records = [r for i, r in enumerate(pool.records) if i not in chosen_set]
    return selected


# ---------------------------------------------------------------------
# Split
# ---------------------------------------------------------------------
def split_scores(record: SubdomainRecord, top_percent: float, min_width: float = MIN_WIDTH,
                 heuristic: str = "product") -> np.ndarray:
    """
    Per-dimension split score over the top-w% samples; -inf where not splittable.
    product: width_j * |n_lo - n_up|, width: width_j alone, count: |n_lo - n_up| alone.
    """
    if heuristic not in SPLIT_HEURISTICS:
        raise ValueError(f"unknown split heuristic {heuristic!r}; expected one of {SPLIT_HEURISTICS}")
    box = record.box
    widths = box.widths
    mid = box.center
    top = record.top_inputs
    if top.size and heuristic != "width":
        k = max(1, int(math.ceil(len(top) * top_percent / 100.0)))
        top = top[:k]
        n_lo = (top <= mid).sum(axis=0)
        imbalance = np.abs(n_lo - (top.shape[0] - n_lo)).astype(np.float64)
        scores = widths * imbalance if heuristic == "product" else imbalance
        if not np.any(scores[widths > min_width] > 0):
            scores = widths.copy()
    else:
        scores = widths.copy()
    return np.where(widths > min_width, scores, -np.inf)


def split(record: SubdomainRecord, top_percent: float = 1.0, min_width: float = MIN_WIDTH,
          heuristic: str = "product") -> Optional[Tuple[SubdomainRecord, SubdomainRecord]]:
    """
    Bisect along the best-scoring dimension (ties -> lowest index). The best input
    warm-starts the child containing it; top samples go to the child containing each.
    Returns None once every dimension is at the width floor.
    """
    scores = split_scores(record, top_percent, min_width, heuristic)
    if not np.isfinite(scores).any():
        return None
    j = int(np.argmax(scores))
    lo_box, up_box = record.box.bisect(j)
    mid = lo_box.upper[j]
    lo = SubdomainRecord(box=lo_box, depth=record.depth + 1, parent=record.id, lf=record.lf)
    up = SubdomainRecord(box=up_box, depth=record.depth + 1, parent=record.id, lf=record.lf)
    if record.best is not None and np.all(np.isfinite(record.best)):
        if record.best[j] <= mid:
            lo.warm_start = record.best
        else:
            up.warm_start = record.best
    if record.top_inputs.size:
        left = record.top_inputs[:, j] <= mid
        lo.init_samples = record.top_inputs[left]
        up.init_samples = record.top_inputs[~left]
    return lo, up


# ---------------------------------------------------------------------
# Bounding
# ---------------------------------------------------------------------
@lru_cache(maxsize=16)
def _critical_points(quad: float, freq: float, low: float, high: float) -> Tuple[np.ndarray, np.ndarray]:
    """Roots of g'(x) = 2*quad*x - freq*sin(freq*x) in [low, high] and g at those roots."""
    def deriv(x):
        return 2.0 * quad * x - freq * np.sin(freq * x)

    grid = np.linspace(low, high, int(round((high - low) / _SCAN_STEP)) + 1)
    dv = deriv(grid)
    roots = list(grid[dv == 0.0])
    idx = np.nonzero(dv[:-1] * dv[1:] < 0)[0]
    a, b = grid[idx], grid[idx + 1]
    fa = deriv(a)
    for _ in range(_BISECT_ROUNDS):
        m = (a + b) / 2.0
        fm = deriv(m)
        left = fa * fm <= 0
        b = np.where(left, m, b)
        a = np.where(left, a, m)
        fa = np.where(left, fa, fm)
    roots.extend((a + b) / 2.0)
    xs = np.sort(np.asarray(roots, dtype=np.float64))
    return xs, quad * xs * xs + np.cos(freq * xs)


def separable_interval_argmin(objective, lower: np.ndarray, upper: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """-> (min of the 1-D term over [lower_j, upper_j], a point attaining it) for every j."""
    root = objective.root_box()
    xs, gs = _critical_points(objective.quad, objective.freq, float(root.lower[0]), float(root.upper[0]))
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    g_lo, g_up = objective.term(lower), objective.term(upper)
    best = np.minimum(g_lo, g_up)
    point = np.where(g_lo <= g_up, lower, upper)
    start = np.searchsorted(xs, lower, side="left")
    stop = np.searchsorted(xs, upper, side="right")
    for j in np.nonzero(stop > start)[0]:
        k = start[j] + int(np.argmin(gs[start[j]:stop[j]]))
        if gs[k] < best[j]:
            best[j], point[j] = gs[k], xs[k]
    return best, point


def separable_interval_minimum(objective, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Exact min of the 1-D term over [lower_j, upper_j] for every j."""
    return separable_interval_argmin(objective, lower, upper)[0]


def separable_lower_bound(objective, box: BoxDomain) -> float:
    return float(separable_interval_minimum(objective, box.lower, box.upper).sum())


def separable_optimum(objective) -> Tuple[float, float]:
    """-> (g*, d * g*): the 1-D minimum and the optimum of the full objective."""
    root = objective.root_box()
    g = float(separable_interval_minimum(objective, root.lower[:1], root.upper[:1])[0])
    return g, objective.dim * g


def resolve_bounding(objective, mode: str) -> str:
    separable = getattr(objective, "separable", False)
    if mode == "auto":
        return "exact" if separable else "early-stop+empirical"
    if separable and mode not in ("exact", "zero"):
        logger.debug(f"Separable objective: using exact bounds instead of {mode}")
        return "exact"
    if not separable and mode == "exact":
        raise BoundError("exact bounding needs a separable objective")
    return mode


def bound_with_points(objective, records: Sequence[SubdomainRecord], mode: str,
                      reports: Optional[Sequence[SearchReport]] = None,
                      stop_rule: str = "last-relu") -> List[Tuple[float, Optional[np.ndarray]]]:
    """
    (lf, point) per record: the lower bound on the record's box, tightened by the parent's
    lf in sound modes, and the input attaining it when the bounder exposes one.
    'zero' is the trivial bound 0 with no point.
    """
    mode = resolve_bounding(objective, mode)
    if not records:
        return []

    def one(i: int) -> Tuple[float, Optional[np.ndarray]]:
        rec = records[i]
        if mode == "zero":
            return 0.0, None
        if mode == "exact":
            values, point = separable_interval_argmin(objective, rec.box.lower, rec.box.upper)
            return float(values.sum()), point
        rep = reports[i] if reports is not None else None
        result = lower_bound(
            objective, rec.box, mode=mode,
            records=rep.activations if rep is not None else None,
            sample_count=rep.samples if rep is not None else 0,
            rule=stop_rule,
        )
        lf = result.lf
        if mode in SOUND_MODES and math.isfinite(rec.lf):
            lf = max(lf, rec.lf)
        return lf, result.argmin

    workers = min(thread_count(), len(records))
    if workers > 1 and mode not in ("exact", "zero"):
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, range(len(records))))
    return [one(i) for i in range(len(records))]


def bound(objective, records: Sequence[SubdomainRecord], mode: str,
          reports: Optional[Sequence[SearchReport]] = None, stop_rule: str = "last-relu") -> List[float]:
    """Lower bounds for each record's box; tightened by the parent's lf in sound modes."""
    return [lf for lf, _ in bound_with_points(objective, records, mode, reports, stop_rule)]


def score_points(objective, records: Sequence[SubdomainRecord], points: Sequence[Optional[np.ndarray]],
                 budget: Optional[int] = None, exact: Optional[bool] = None) -> int:
    """
    Evaluate each record's bound point as a feasible candidate and keep it when it beats
    the record's uf. At most budget points are scored; returns how many were.
    """
    todo = [(rec, rec.box.clamp(np.atleast_2d(p))[0]) for rec, p in zip(records, points)
            if p is not None and np.all(np.isfinite(p))]
    if budget is not None:
        todo = todo[:max(budget, 0)]
    if not todo:
        return 0
    values = np.asarray(objective.evaluate(np.vstack([p for _, p in todo]), exact=exact).values, dtype=np.float64)
    for (rec, p), v in zip(todo, values):
        if v < rec.uf:
            rec.uf = float(v)
            rec.best = p
    return len(todo)


# ---------------------------------------------------------------------
# Prune
# ---------------------------------------------------------------------
def prune(pool: DomainPool, incumbent_uf: Optional[float] = None) -> List[SubdomainRecord]:
    """Drop records with lf > uf (strict) and add their volume to the pruned share."""
    uf = pool.incumbent_uf if incumbent_uf is None else incumbent_uf
    kept, dropped = [], []
    for r in pool.records:
        (dropped if r.lf > uf else kept).append(r)
    pool.records = kept
    for r in dropped:
        pool.pruned_log_volume = float(np.logaddexp(pool.pruned_log_volume, pool.log_volume(r.box)))
    return dropped


# ---------------------------------------------------------------------
# Plan loop
# ---------------------------------------------------------------------
@dataclass
class PlanResult:
    uf: float
    best: Optional[np.ndarray]
    trace: List[TraceRow]
    samples: int = 0
    iterations: int = 0
    pruned_volume: float = 0.0
    heuristic: bool = False
    failed: bool = False
    message: str = ""
    pool: Optional[DomainPool] = None


def derive_seed(master: int, iteration: int, index: int) -> int:
    return int(np.random.SeedSequence([master, iteration, index]).generate_state(1)[0])


def plan(objective, box: Optional[BoxDomain] = None, config: Optional[PlannerConfig] = None,
         warm_start: Optional[np.ndarray] = None, exact: Optional[bool] = None) -> PlanResult:
    """
    Search the root box, bound it, then repeat pick-out -> split -> search children ->
    bound children -> incumbent update -> prune until the pool empties or a stop rule fires.
    """
    cfg = config or PlannerConfig()
    box = box or objective.root_box()
    if box is None:
        raise BoundError("no box given and the objective has no root box")
    mode = resolve_bounding(objective, cfg.bounding)
    watch = watch_nodes(objective, mode, cfg.stop_rule) if isinstance(objective, CompGraph) else []
    rng = np.random.default_rng(cfg.seed)
    pool = DomainPool(box)
    trace: List[TraceRow] = []
    result = PlanResult(uf=math.inf, best=None, trace=trace, heuristic=(mode in ("early-stop+empirical", "zero")), pool=pool)
    t0 = time.time()
    samples = 0

    def row(it: int, selected_vol: float) -> TraceRow:
        r = TraceRow(
            iter=it,
            uf=pool.incumbent_uf,
            min_lf=pool.min_lf,
            pruned_vol=pool.pruned_volume,
            selected_vol=selected_vol,
            pool_size=len(pool),
            samples=samples,
            wall_ms=(time.time() - t0) * 1000.0,
        )
        trace.append(r)
        logger.debug(f"iter {it}: uf={r.uf:.6f} min_lf={r.min_lf:.6f} pruned={r.pruned_vol:.4f} pool={r.pool_size}")
        return r

    def expand(children: List[SubdomainRecord], iteration: int) -> None:
        nonlocal samples
        seeds = [derive_seed(cfg.seed, iteration, i) for i in range(len(children))]
        limits = None
        if cfg.max_samples is not None:
            # remaining budget shared out over the children, earlier ones take the remainder
            left = max(cfg.max_samples - samples, 0)
            n = len(children)
            limits = [left // n + (1 if i < left % n else 0) for i in range(n)]
        reports = batch_search(
            objective, [c.box for c in children], cfg.searcher,
            warm_starts=[c.warm_start for c in children],
            init_samples=[c.init_samples for c in children],
            watch=watch, seeds=seeds, exact=exact, limits=limits,
        )
        for child, rep in zip(children, reports):
            child.id = pool.new_id()
            child.absorb(rep)
            samples += rep.samples
        bounds = bound_with_points(objective, children, mode, reports, cfg.stop_rule)
        if cfg.score_bound_points:
            left = None if cfg.max_samples is None else cfg.max_samples - samples
            samples += score_points(objective, children, [p for _, p in bounds], left, exact)
        for child, (lf, _) in zip(children, bounds):
            child.lf = lf
            pool.observe(child.uf, child.best)
        pool.add(children)
        if mode != "zero":
            prune(pool)

    logger.info(f"🚀 BaB plan: dim={box.dim} bounding={mode} batch={cfg.batch_size} eta={cfg.eta} T={cfg.temperature}")
    it = 0
    try:
        expand([SubdomainRecord(box=box, warm_start=box.center if warm_start is None else warm_start)], 0)
        row(0, 1.0)
        while pool.records and it < cfg.max_iterations:
            if cfg.timeout is not None and time.time() - t0 >= cfg.timeout:
                logger.info("⏱️ BaB stopped: wall-clock limit reached")
                break
            if cfg.target is not None and pool.incumbent_uf <= cfg.target:
                logger.info(f"🎯 BaB stopped: target {cfg.target} reached")
                break
            if cfg.max_samples is not None and samples >= cfg.max_samples:
                logger.info(f"BaB stopped: sample budget {cfg.max_samples} used")
                break
            if cfg.gap_tolerance is not None and pool.incumbent_uf - pool.min_lf <= cfg.gap_tolerance:
                logger.info(f"BaB stopped: gap within {cfg.gap_tolerance}")
                break
            it += 1
            selected = pick_out(pool, cfg.batch_size, cfg.eta, cfg.temperature, rng)
            selected_vol = math.exp(float(np.logaddexp.reduce([pool.log_volume(r.box) for r in selected])))
            children = []
            for rec in selected:
                pair = split(rec, cfg.top_percent, cfg.min_width, cfg.split_heuristic)
                if pair is None:
                    pool.retire(rec)
                else:
                    children.extend(pair)
            if children:
                expand(children, it)
            row(it, selected_vol)
    except (PlannerError, ValueError, FloatingPointError) as e:
        logger.error(f"❌ BaB failed at iteration {it}: {e}")
        result.failed = True
        result.message = str(e)

    result.uf = pool.incumbent_uf
    result.best = pool.incumbent
    result.samples = samples
    result.iterations = it
    result.pruned_volume = pool.pruned_volume
    logger.info(f"✅ BaB done: uf={result.uf:.6f} iterations={it} samples={samples} in {time.time() - t0:.3f}s")
    return result
