# cli.py
# Command-line front end: synth, plan, mpc, audit-bounds, gen-model, compare, replay.
# Exit codes: 0 success, 1 planner failure, 2 usage / parse error.

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from bab import BOUNDING_CHOICES, SPLIT_HEURISTICS
from bench import METHODS, PATH_METHODS, replay, run_command
from errors import PlanFailure, PlannerError
from model_io import PRESETS
from settings import configure_logging, output_dir

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

# flag dest -> PlannerConfig field
PLANNER_FLAGS = ("batch_size", "eta", "temperature", "top_percent", "searcher", "bounding", "split_heuristic",
                 "score_bound_points", "max_iterations", "timeout", "target", "max_samples", "gap_tolerance")


def _add_problem_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help="scenario JSON file")
    p.add_argument("--model", help="model JSON file")
    p.add_argument("--preset", choices=PRESETS, help="built-in scenario (model generated from --model-seed)")
    p.add_argument("--model-seed", type=int, default=0)
    p.add_argument("--horizon", type=int)
    p.add_argument("--cost-form", choices=("tracking", "tracking_obstacles", "pusher_penalty"))


def _add_planner_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="planner config JSON (flags override its fields)")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--temperature", type=float)
    p.add_argument("--top-percent", type=float)
    p.add_argument("--searcher", choices=("cem", "mppi", "gd"))
    p.add_argument("--bounding", choices=BOUNDING_CHOICES)
    p.add_argument("--split-heuristic", choices=SPLIT_HEURISTICS)
    p.add_argument("--no-bound-points", dest="score_bound_points", action="store_false", default=None,
                   help="do not score the input attaining each box's bound")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--max-samples", type=int)
    p.add_argument("--timeout", type=float, help="wall-clock seconds")
    p.add_argument("--target", type=float, help="stop once the objective is <= target")
    p.add_argument("--gap-tolerance", type=float, help="stop once uf - min lf is within this")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="babnd", description="Branch-and-bound planning over ReLU dynamics models")
    parser.add_argument("--out", help="output directory (default: $BABND_OUTPUT_DIR/<command>)")
    parser.add_argument("--log-level", help="overrides BABND_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthetic sum of 5x^2 + cos(50x)")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--method", choices=METHODS, default="babnd")
    p.add_argument("--budget", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("plan", help="open-loop plan on a scenario")
    _add_problem_args(p)
    _add_planner_args(p)
    p.add_argument("--method", choices=METHODS + PATH_METHODS, default="babnd")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("mpc", help="closed loop against the model")
    _add_problem_args(p)
    _add_planner_args(p)
    p.add_argument("--method", choices=METHODS, default="babnd")
    p.add_argument("--replan-period", type=int, default=1)
    p.add_argument("--tracking", choices=("direct", "reference"), default="direct")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("audit-bounds", help="property checks for the bounding code")
    _add_problem_args(p)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt", action="store_true", help="negative control with collapsed bounds")

    p = sub.add_parser("gen-model", help="seeded model JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--widths", type=int, nargs="+", required=True)
    p.add_argument("--residual", action="store_true")
    p.add_argument("--model-out", dest="model_out", help="model path (default: <out>/model.json)")

    p = sub.add_parser("compare", help="(method x seed) grid to one CSV")
    _add_problem_args(p)
    _add_planner_args(p)
    p.add_argument("--methods", nargs="+", choices=METHODS + PATH_METHODS, default=list(METHODS))
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--d", type=int, help="run on the synthetic objective instead of a scenario")
    p.add_argument("--budget", type=int, default=20000)

    p = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    p.add_argument("manifest")
    return parser


def arguments_from(ns: argparse.Namespace) -> Dict[str, Any]:
    """Namespace -> the JSON-able argument dict stored in the manifest."""
    raw = {k: v for k, v in vars(ns).items() if k not in ("command", "out", "log_level")}
    overrides = {k: raw.pop(k) for k in PLANNER_FLAGS if k in raw}
    if ns.command in ("plan", "mpc", "compare"):
        overrides["seed"] = raw.get("seed", 0) if ns.command != "compare" else None
        raw["overrides"] = {k: v for k, v in overrides.items() if v is not None}
    if ns.command == "gen-model":
        raw["out"] = raw.pop("model_out", None)
    return raw


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    configure_logging(ns.log_level)
    out = ns.out or str(Path(output_dir()) / ns.command)
    try:
        if ns.command == "replay":
            result, manifest = replay(ns.manifest, ns.out)
        else:
            result, manifest = run_command(ns.command, arguments_from(ns), out)
    except PlanFailure as e:
        logger.error(f"❌ planner failure: {e}")
        return EXIT_FAILURE
    except (PlannerError, ValidationError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    summary = {k: v for k, v in result.items() if k not in ("states", "positions", "predicted", "u", "actions")}
    print(json.dumps({"command": manifest.command, "outputs": manifest.outputs, "result": summary}, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
