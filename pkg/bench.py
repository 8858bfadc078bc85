# bench.py
# Experiment orchestration behind the CLI and the HTTP service: synthetic runs, open-loop
# planning, closed-loop MPC against the model itself, bound audits, model generation,
# method comparisons, and run manifests that can be replayed.

import hashlib
import itertools
import json
import logging
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from bab import TRACE_COLUMNS, PlannerConfig, plan, separable_optimum
from baselines import prm_build, prm_plan, rrt_plan, sampler_plan
from crown import SOUND_MODES, PreactBounds, lower_bound, relax_relu, watch_nodes
from errors import BudgetError, PlanFailure, ScenarioError
from graph_core import BoxDomain
from model_io import (
    MlpModel,
    ObjectiveSpec,
    Scenario,
    build_objective,
    build_synthetic,
    generate_model,
    load_model,
    load_scenario,
    penalty_terms,
    preset_scenario,
    random_objective,
    rollout,
    save_model,
    step_costs,
    step_dynamics,
)
from search import SearcherConfig, search

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
METHODS = ("babnd", "cem", "mppi", "gd")
PATH_METHODS = ("rrt", "prm")
SYNTH_COLUMNS = ("method", "d", "seed", "best_f", "gap", "samples", "wall_ms")
SAMPLER_TRACE_COLUMNS = ("iter", "uf")
PATH_TRACE_COLUMNS = ("step", "goal_distance")
MPC_COLUMNS = ("step", "cost", "goal_distance", "replanned", "plan_uf", "plan_ms")
TIMING_COLUMNS = ("wall_ms", "plan_ms")


# ---------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------
class RunManifest(BaseModel):
    schema_version: int = SCHEMA_VERSION
    command: str
    arguments: Dict[str, Any]
    seed: int = 0
    config_digest: str
    model_digest: Optional[str] = None
    started: str
    finished: Optional[str] = None
    outputs: Dict[str, str] = Field(default_factory=dict)
    status: Literal["ok", "failed"] = "ok"
    error: Optional[str] = None


def digest_document(doc: Any) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode("utf-8")).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _write_csv(df: pd.DataFrame, path: Path) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False)
    return str(path)


def _write_json(doc: Dict[str, Any], path: Path) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, default=_json_default))
    return str(path)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# ---------------------------------------------------------------------
# Config helpers
# ---------------------------------------------------------------------
def planner_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> PlannerConfig:
    """Planner config from an optional JSON file, then flag overrides (searcher keys nest)."""
    base = PlannerConfig.model_validate_json(Path(path).read_text()) if path else PlannerConfig()
    doc = base.model_dump()
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "searcher":
            doc["searcher"]["kind"] = value
        elif key.startswith("searcher_"):
            doc["searcher"][key[len("searcher_"):]] = value
        else:
            doc[key] = value
    return PlannerConfig.model_validate(doc)


def synth_planner_config(budget: int, seed: int = 0) -> PlannerConfig:
    """Desk-scale BaB settings for the synthetic benchmark, capped at the sample budget."""
    return PlannerConfig.base(
        batch_size=8,
        max_iterations=1_000_000,
        max_samples=budget,
        seed=seed,
        searcher=SearcherConfig(kind="cem", samples=64, iterations=4, agents=2, elites=8, seed=seed),
    )


def sampler_config(kind: str, budget: int, seed: int = 0, iterations: int = 10) -> SearcherConfig:
    iterations = max(1, min(iterations, budget))
    return SearcherConfig(
        kind=kind,
        samples=max(1, budget // iterations),
        iterations=iterations,
        seed=seed,
        temperature=1.0,
        temperature_ratios=[0.1, 0.5, 1.0],
        noise_std=0.25,
        noise_ratios=[0.1, 0.5, 1.0],
        step_ratios=[0.05, 0.1, 0.25, 0.5, 1.0],
    )


def resolve_problem(scenario: Optional[str] = None, model: Optional[str] = None, preset: Optional[str] = None,
                    model_seed: int = 0, horizon: Optional[int] = None,
                    cost_form: Optional[str] = None) -> Tuple[Scenario, MlpModel, str]:
    """Scenario + model from files, or from a named preset with a seeded model."""
    if preset:
        sc, widths, form = preset_scenario(preset, horizon or 5)
        mdl = load_model(model) if model else generate_model(model_seed, widths, residual=True)
        return sc, mdl, cost_form or form
    if not scenario or not model:
        raise ScenarioError("need --scenario and --model files, or --preset")
    sc = load_scenario(scenario)
    if horizon:
        sc = sc.model_copy(update={"horizon": horizon, "tracking_weights": None})
    return sc, load_model(model), cost_form or "tracking"


# ---------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------
def cmd_synth(d: int, method: str = "babnd", budget: int = 20000, seed: int = 0,
              config: Optional[PlannerConfig] = None) -> Dict[str, Any]:
    """One run on sum_i 5x_i^2 + cos(50x_i); gap is measured against d * g*."""
    if budget < 1:
        raise BudgetError("budget must be at least 1 sample")
    if method not in METHODS:
        raise ScenarioError(f"unknown method {method!r}; expected one of {METHODS}")
    objective = build_synthetic(d)
    _, f_star = separable_optimum(objective)
    t0 = time.time()
    if method == "babnd":
        result = plan(objective, config=config or synth_planner_config(budget, seed))
        if result.failed:
            raise PlanFailure(result.message)
        best, samples = result.uf, result.samples
    else:
        report = sampler_plan(objective, method, sampler_config(method, budget, seed), seed=seed)
        best, samples = report.uf, report.samples
    row = {
        "method": method,
        "d": d,
        "seed": seed,
        "best_f": best,
        "gap": best - f_star,
        "samples": samples,
        "wall_ms": (time.time() - t0) * 1000.0,
    }
    logger.info(f"synth d={d} {method}: f={best:.6f} gap={row['gap']:.6f} samples={samples}")
    return row


# ---------------------------------------------------------------------
# plan
# ---------------------------------------------------------------------
def _solution(scenario: Scenario, model: MlpModel, cost_form: str, u: np.ndarray, uf: Optional[float]) -> Dict[str, Any]:
    xs, ps = rollout(model, scenario, u)
    return {
        "u": np.asarray(u).tolist(),
        "uf": uf,
        "states": xs.tolist(),
        "positions": ps.tolist(),
        "step_costs": step_costs(model, scenario, cost_form, u).tolist(),
    }


def cmd_plan(scenario: Scenario, model: MlpModel, method: str = "babnd", cost_form: str = "tracking",
             config: Optional[PlannerConfig] = None, warm_start: Optional[np.ndarray] = None,
             exact: Optional[bool] = None) -> Dict[str, Any]:
    """
    Open-loop plan. -> {"trace": DataFrame, "solution": dict, "success": bool}.
    rrt/prm solutions carry the node path instead of a fixed-horizon action sequence.
    """
    cfg = config or PlannerConfig()
    t0 = time.time()
    if method in PATH_METHODS:
        return _path_plan(scenario, model, method, cost_form, cfg.seed)
    if method not in METHODS:
        raise ScenarioError(f"unknown method {method!r}; expected one of {METHODS + PATH_METHODS}")
    graph, box = build_objective(ObjectiveSpec(scenario, model, cost_form))
    if method == "babnd":
        result = plan(graph, box, cfg, warm_start=warm_start, exact=exact)
        trace = pd.DataFrame([r.as_tuple() for r in result.trace], columns=list(TRACE_COLUMNS))
        if result.best is None:
            raise PlanFailure(result.message or "branch and bound found no solution")
        u, uf, success = result.best, result.uf, not result.failed
        extra = {"heuristic": result.heuristic, "failed": result.failed, "message": result.message,
                 "samples": result.samples, "iterations": result.iterations}
    else:
        report = sampler_plan(graph, method, cfg.searcher, seed=cfg.seed, warm_start=warm_start, exact=exact)
        trace = pd.DataFrame({"iter": range(1, len(report.history) + 1), "uf": report.history},
                             columns=list(SAMPLER_TRACE_COLUMNS))
        u, uf, success = report.best, report.uf, report.ok
        extra = {"samples": report.samples}
    solution = _solution(scenario, model, cost_form, u, uf)
    solution.update(method=method, cost_form=cost_form, wall_ms=(time.time() - t0) * 1000.0, **extra)
    logger.info(f"plan {scenario.name} {method}: uf={uf:.6f} in {time.time() - t0:.3f}s")
    return {"trace": trace, "solution": solution, "success": success}


def _path_plan(scenario: Scenario, model: MlpModel, method: str, cost_form: str, seed: int) -> Dict[str, Any]:
    if method == "rrt":
        path = rrt_plan(model, scenario, cost_form, seed=seed)
    else:
        roadmap = prm_build(model, scenario, n_nodes=400, seed=seed)
        path = prm_plan(roadmap, model, scenario, cost_form)
    goal = np.asarray(scenario.x_target)
    trace = pd.DataFrame({"step": range(len(path.states)),
                          "goal_distance": np.linalg.norm(path.states - goal, axis=1)},
                         columns=list(PATH_TRACE_COLUMNS))
    final = path.predicted[-1] if path.length else path.states[-1]
    final_cost = float((scenario.state_axis_weights() * (final - goal) ** 2).sum())
    solution = {
        "method": method,
        "success": path.success,
        "actions": path.actions.tolist(),
        "states": path.states.tolist(),
        "positions": path.positions.tolist(),
        "predicted": path.predicted.tolist(),
        "goal_distance": path.goal_distance,
        "final_cost": final_cost,
        "message": path.message,
    }
    return {"trace": trace, "solution": solution, "success": path.success}


# ---------------------------------------------------------------------
# mpc
# ---------------------------------------------------------------------
def _step_cost(scenario: Scenario, cost_form: str, x: np.ndarray, p: np.ndarray, weight: float) -> float:
    target = np.asarray(scenario.x_target)
    c = weight * float((scenario.state_axis_weights() * (x - target) ** 2).sum())
    return c + penalty_terms(scenario, cost_form, x, p)


def cmd_mpc(scenario: Scenario, model: MlpModel, method: str = "babnd", cost_form: str = "tracking",
            config: Optional[PlannerConfig] = None, replan_period: int = 1, tracking: str = "direct",
            tracking_horizon: int = 2, exact: Optional[bool] = None) -> Dict[str, Any]:
    """
    Closed loop where the environment is the dynamics model itself. 'direct' replans the
    remaining horizon every replan_period steps (warm-started with the unused tail of the
    last plan); 'reference' plans once, then tracks the planned states with short MPPI plans.
    """
    if replan_period < 1:
        raise ScenarioError("replan period must be >= 1")
    if tracking not in ("direct", "reference"):
        raise ScenarioError(f"unknown tracking mode {tracking!r}")
    cfg = config or PlannerConfig()
    H, k = scenario.horizon, scenario.action_dim
    weights = scenario.step_weights()
    goal = np.asarray(scenario.x_target)
    x = np.asarray(scenario.x0, dtype=np.float64)
    p = np.asarray(scenario.p0, dtype=np.float64)
    rows: List[Dict[str, Any]] = []
    t0 = time.time()

    if tracking == "direct":
        tail: Optional[np.ndarray] = None
        t = 0
        while t < H:
            sub = scenario.model_copy(update={"x0": x.tolist(), "p0": p.tolist(), "horizon": H - t,
                                              "tracking_weights": weights[t:]})
            tp = time.time()
            out = cmd_plan(sub, model, method, cost_form, cfg, warm_start=tail, exact=exact)
            plan_ms = (time.time() - tp) * 1000.0
            u = np.asarray(out["solution"]["u"]).reshape(H - t, k)
            run = min(replan_period, H - t)
            for i in range(run):
                x = step_dynamics(model, x, p, u[i], scenario.features)[0]
                p = p + u[i]
                rows.append({"step": t + i + 1, "cost": _step_cost(scenario, cost_form, x, p, weights[t + i]),
                             "goal_distance": float(np.linalg.norm(x - goal)), "replanned": i == 0,
                             "plan_uf": out["solution"]["uf"], "plan_ms": plan_ms if i == 0 else 0.0})
            tail = u[run:].reshape(-1) if run < H - t else None
            t += run
    else:
        ref = cmd_plan(scenario, model, method, cost_form, cfg, exact=exact)
        ref_states = np.asarray(ref["solution"]["states"])
        tracker_cfg = SearcherConfig(kind="mppi", samples=cfg.searcher.samples, iterations=cfg.searcher.iterations,
                                     seed=cfg.seed, temperature=1.0, noise_std=0.3)
        for t in range(H):
            h = min(tracking_horizon, H - t)
            sub = scenario.model_copy(update={"x0": x.tolist(), "p0": p.tolist(), "horizon": h,
                                              "x_target": ref_states[t + h].tolist(),
                                              "tracking_weights": [1.0] * h})
            graph, box = build_objective(ObjectiveSpec(sub, model, cost_form))
            tp = time.time()
            rep = search(graph, box, tracker_cfg, warm_start=box.center, seed=cfg.seed + t, exact=exact)
            plan_ms = (time.time() - tp) * 1000.0
            a = rep.best[:k]
            x = step_dynamics(model, x, p, a, scenario.features)[0]
            p = p + a
            rows.append({"step": t + 1, "cost": _step_cost(scenario, cost_form, x, p, weights[t]),
                         "goal_distance": float(np.linalg.norm(x - goal)), "replanned": True,
                         "plan_uf": rep.uf, "plan_ms": plan_ms})

    trace = pd.DataFrame(rows, columns=list(MPC_COLUMNS))
    final_cost = float(trace["cost"].iloc[-1])
    logger.info(f"mpc {scenario.name} {method}/{tracking}: final cost {final_cost:.6f} in {time.time() - t0:.3f}s")
    return {"trace": trace, "final_cost": final_cost, "total_cost": float(trace["cost"].sum())}


# ---------------------------------------------------------------------
# audit-bounds
# ---------------------------------------------------------------------
def collapse_to_midpoint(preact: PreactBounds) -> PreactBounds:
    """Negative control: every bound pair shrinks to its midpoint."""
    bad = PreactBounds()
    for nid, (lo, hi) in preact.bounds.items():
        mid = (lo + hi) / 2.0
        bad.set(nid, mid, mid.copy(), "interval")
    return bad


def _vertices(box: BoxDomain) -> np.ndarray:
    return np.array(list(itertools.product(*zip(box.lower, box.upper))), dtype=np.float64)


def _tally() -> Dict[str, int]:
    return {"checks": 0, "violations": 0}


def audit_objective_args(seed: int, trial: int) -> Dict[str, Any]:
    """random_objective arguments for one audit trial: d <= 4, up to 4 ReLU layers of width <= 32."""
    sub = np.random.default_rng([seed, trial])
    return {
        "seed": int(sub.integers(2 ** 31)),
        "d": int(sub.integers(1, 5)),
        "depth": int(sub.integers(1, 5)),
        "width": int(sub.integers(2, 33)),
        "head": ("linear", "tracking")[int(sub.integers(2))],
    }


def cmd_audit_bounds(trials: int = 50, seed: int = 0, scenario: Optional[Scenario] = None,
                     model: Optional[MlpModel] = None, cost_form: str = "tracking",
                     corrupt: bool = False, samples: int = 2000) -> Dict[str, Any]:
    """
    Property checks for the bounding code: ReLU relaxation sandwich, lf <= sampled minimum
    in the sound modes, exactness on affine objectives, and lf <= best recorded sample
    in empirical mode. corrupt=True swaps in collapsed pre-activation bounds.
    """
    if trials < 1:
        raise BudgetError("audit needs at least one trial")
    rng = np.random.default_rng(seed)
    hook: Optional[Callable[[PreactBounds], PreactBounds]] = collapse_to_midpoint if corrupt else None
    checks = {name: _tally() for name in ("sandwich", "soundness", "linear_exactness", "empirical")}
    t0 = time.time()

    def objective_for(trial: int):
        if scenario is not None and model is not None:
            graph, root = build_objective(ObjectiveSpec(scenario, model, cost_form))
            center = root.sample(rng, 1)[0]
            half = root.half_widths * rng.uniform(0.05, 0.5)
            return graph, BoxDomain(np.maximum(center - half, root.lower), np.minimum(center + half, root.upper))
        return random_objective(**audit_objective_args(seed, trial))

    for trial in range(trials):
        # sandwich
        n = 64
        lo = rng.normal(0.0, 1.0, n)
        hi = lo + rng.exponential(1.0, n)
        policy = ("adaptive", "zero", "one", float(rng.uniform()))[trial % 4]
        r = relax_relu(lo, hi, policy)
        z = lo[:, None] + (hi - lo)[:, None] * rng.uniform(size=(n, 100))
        relu = np.maximum(z, 0.0)
        low = r.lower_slope[:, None] * z + r.lower_offset[:, None]
        up = r.upper_slope[:, None] * z + r.upper_offset[:, None]
        checks["sandwich"]["checks"] += z.size
        checks["sandwich"]["violations"] += int(((low > relu + 1e-12) | (relu > up + 1e-12)).sum())

        # soundness
        graph, box = objective_for(trial)
        pts = box.sample(rng, samples)
        if box.dim <= 4:
            pts = np.vstack([pts, _vertices(box), box.center[None, :]])
        f_min = float(graph.evaluate(pts).values.min())
        for mode in SOUND_MODES:
            lf = lower_bound(graph, box, mode=mode, preact_hook=hook).lf
            checks["soundness"]["checks"] += 1
            if lf > f_min + 1e-9 * max(1.0, abs(f_min)):
                checks["soundness"]["violations"] += 1
                logger.debug(f"soundness violation trial {trial} mode {mode}: lf={lf} > min f={f_min}")

        # empirical consistency
        watch = watch_nodes(graph, "early-stop+empirical")
        rep = search(graph, box, SearcherConfig(samples=64, iterations=3, agents=2), watch=watch,
                     seed=seed + trial)
        lf = lower_bound(graph, box, mode="early-stop+empirical", records=rep.activations,
                         sample_count=rep.samples, preact_hook=hook).lf
        checks["empirical"]["checks"] += 1
        if lf > rep.uf + 1e-9 * max(1.0, abs(rep.uf)):
            checks["empirical"]["violations"] += 1

        # affine objectives: the bound is the vertex minimum
        aff, abox = random_objective(seed=seed * 7919 + trial, d=int(rng.integers(1, 5)), depth=2, width=6,
                                     head="affine")
        exact_min = float(aff.evaluate(_vertices(abox), exact=True).values.min())
        for mode in SOUND_MODES:
            lf = lower_bound(aff, abox, mode=mode).lf
            checks["linear_exactness"]["checks"] += 1
            if abs(lf - exact_min) > 1e-9 * max(1.0, abs(exact_min)):
                checks["linear_exactness"]["violations"] += 1

    report = {
        "trials": trials,
        "seed": seed,
        "corrupted": corrupt,
        "checks": checks,
        "passed": all(c["violations"] == 0 for c in checks.values()),
        "wall_ms": (time.time() - t0) * 1000.0,
    }
    status = "✅ passed" if report["passed"] else "❌ violations found"
    logger.info(f"audit-bounds {trials} trials: {status} in {time.time() - t0:.3f}s")
    return report


# ---------------------------------------------------------------------
# gen-model + compare
# ---------------------------------------------------------------------
def cmd_gen_model(seed: int, widths: Sequence[int], out: str, residual: bool = False) -> Dict[str, Any]:
    model = generate_model(seed, widths, residual=residual)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    digest = save_model(model, out)
    logger.info(f"Model written to {out}: widths={model.widths} params={model.param_count} digest={digest[:12]}")
    return {"path": out, "digest": digest, "widths": model.widths, "params": model.param_count}


def cmd_compare(methods: Sequence[str], seeds: Sequence[int], d: Optional[int] = None, budget: int = 20000,
                scenario: Optional[Scenario] = None, model: Optional[MlpModel] = None,
                cost_form: str = "tracking", config: Optional[PlannerConfig] = None) -> pd.DataFrame:
    """(method x seed) grid on the synthetic objective (d given) or on a scenario; one row per run."""
    frames = []
    for method, seed in itertools.product(methods, seeds):
        if d is not None:
            frames.append(pd.DataFrame([cmd_synth(d, method, budget, seed)]))
            continue
        cfg = (config or PlannerConfig()).model_copy(update={"seed": seed})
        out = cmd_plan(scenario, model, method, cost_form, cfg)
        sol = out["solution"]
        frames.append(pd.DataFrame([{
            "method": method,
            "seed": seed,
            "uf": sol.get("uf"),
            "final_cost": sol["step_costs"][-1] if "step_costs" in sol else sol.get("final_cost"),
            "success": out["success"],
            "samples": sol.get("samples"),
            "wall_ms": sol.get("wall_ms"),
        }]))
    table = pd.concat(frames, ignore_index=True)
    metric = "best_f" if d is not None else "uf"
    summary = table.groupby("method")[metric].median()
    logger.info(f"compare medians: {summary.to_dict()}")
    return table


# ---------------------------------------------------------------------
# Command runner + manifests
# ---------------------------------------------------------------------
def _problem(args: Dict[str, Any]) -> Tuple[Scenario, MlpModel, str]:
    return resolve_problem(args.get("scenario"), args.get("model"), args.get("preset"),
                           args.get("model_seed", 0), args.get("horizon"), args.get("cost_form"))


def run_command(command: str, args: Dict[str, Any], out_dir: str) -> Tuple[Dict[str, Any], RunManifest]:
    """
    Execute one command from a JSON-able argument dict, write its outputs plus a
    manifest.json into out_dir. Replaying the manifest repeats the same call.
    A planner failure still leaves a manifest, marked failed, before it propagates.
    """
    out = Path(out_dir)
    started = _now()
    outputs: Dict[str, str] = {}
    model_digest = None
    cfg = planner_config(args.get("config"), args.get("overrides")) if command in ("plan", "mpc", "compare") else None

    def write_manifest(status: str = "ok", error: Optional[str] = None) -> RunManifest:
        manifest = RunManifest(
            command=command,
            arguments=args,
            seed=int(args.get("seed", 0) or 0),
            config_digest=digest_document({"arguments": args, "config": cfg.model_dump() if cfg else None}),
            model_digest=model_digest,
            started=started,
            finished=_now(),
            outputs=outputs,
            status=status,
            error=error,
        )
        outputs["manifest"] = _write_json(manifest.model_dump(), out / "manifest.json")
        return manifest

    result: Dict[str, Any]
    try:
        if command == "synth":
            row = cmd_synth(args["d"], args.get("method", "babnd"), args.get("budget", 20000), args.get("seed", 0))
            outputs["results"] = _write_csv(pd.DataFrame([row], columns=list(SYNTH_COLUMNS)), out / "synth.csv")
            result = row
        elif command == "plan":
            sc, mdl, form = _problem(args)
            model_digest = mdl.digest
            res = cmd_plan(sc, mdl, args.get("method", "babnd"), form, cfg)
            outputs["trace"] = _write_csv(res["trace"], out / "trace.csv")
            outputs["solution"] = _write_json(res["solution"], out / "solution.json")
            if not res["success"]:
                raise PlanFailure(res["solution"].get("message") or "planner reported failure")
            result = res["solution"]
        elif command == "mpc":
            sc, mdl, form = _problem(args)
            model_digest = mdl.digest
            res = cmd_mpc(sc, mdl, args.get("method", "babnd"), form, cfg, args.get("replan_period", 1),
                          args.get("tracking", "direct"))
            outputs["trace"] = _write_csv(res["trace"], out / "mpc.csv")
            result = {"final_cost": res["final_cost"], "total_cost": res["total_cost"]}
        elif command == "audit-bounds":
            sc = mdl = None
            form = "tracking"
            if args.get("preset") or args.get("scenario"):
                sc, mdl, form = _problem(args)
                model_digest = mdl.digest
            result = cmd_audit_bounds(args.get("trials", 50), args.get("seed", 0), sc, mdl, form,
                                      corrupt=args.get("corrupt", False))
            outputs["report"] = _write_json(result, out / "audit.json")
        elif command == "gen-model":
            result = cmd_gen_model(args["seed"], args["widths"], args.get("out") or str(out / "model.json"),
                                   residual=args.get("residual", False))
            model_digest = result["digest"]
            outputs["model"] = result["path"]
        elif command == "compare":
            if args.get("d") is not None:
                table = cmd_compare(args["methods"], args["seeds"], d=args["d"], budget=args.get("budget", 20000))
            else:
                sc, mdl, form = _problem(args)
                model_digest = mdl.digest
                table = cmd_compare(args["methods"], args["seeds"], scenario=sc, model=mdl, cost_form=form,
                                    config=cfg)
            outputs["results"] = _write_csv(table, out / "compare.csv")
            result = {"rows": len(table)}
        else:
            raise ScenarioError(f"unknown command {command!r}")
    except PlanFailure as e:
        write_manifest("failed", str(e))
        logger.warning(f"{command} failed, manifest written to {out / 'manifest.json'}")
        raise

    return result, write_manifest()


def replay(manifest_path: str, out_dir: Optional[str] = None) -> Tuple[Dict[str, Any], RunManifest]:
    manifest = RunManifest.model_validate_json(Path(manifest_path).read_text())
    target = out_dir or str(Path(manifest_path).parent / "replay")
    logger.info(f"Replaying {manifest.command} from {manifest_path} into {target}")
    return run_command(manifest.command, manifest.arguments, target)


def strip_timing(df: pd.DataFrame) -> pd.DataFrame:
    return df.drop(columns=[c for c in TIMING_COLUMNS if c in df.columns])
