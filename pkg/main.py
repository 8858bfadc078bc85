# main.py
# FastAPI entrypoint for the planner:
# - Synthetic benchmark run:   POST /v1/synth
# - Open-loop scenario plan:   POST /v1/plan
# - Bounding property audit:   POST /v1/audit-bounds

import asyncio
import logging
import time
from typing import Any, Dict, List, Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field, ValidationError

from bab import PlannerConfig
from bench import METHODS, PATH_METHODS, cmd_audit_bounds, cmd_plan, cmd_synth, resolve_problem
from errors import PlanFailure, PlannerError
from model_io import COST_FORMS, PRESETS, Scenario, model_from_document
from settings import configure_logging

configure_logging()
logger = logging.getLogger(__name__)

app = FastAPI(title="BaB-ND Planner", version="1.0.0")

app.add_middleware(
    CORSMiddleware,
    allow_origins=[
        "http://localhost:3000",
        "http://localhost:3001",
        "http://localhost:8000",
    ],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


async def _in_executor(fn, *args, **kwargs):
    loop = asyncio.get_event_loop()
    return await loop.run_in_executor(None, lambda: fn(*args, **kwargs))


def _json_records(df) -> List[Dict[str, Any]]:
    """DataFrame rows with non-finite numbers as null."""
    clean = df.replace([np.inf, -np.inf], np.nan).astype(object)
    return clean.where(clean.notna(), None).to_dict(orient="records")


def _error_status(exc: Exception) -> int:
    if isinstance(exc, PlanFailure):
        return 500
    if isinstance(exc, (PlannerError, ValidationError, ValueError)):
        return 422
    return 500


# --------------------------
# Health
# --------------------------

@app.get("/health")
async def health():
    return {"ok": True}

@app.get("/babnd-health")
async def babnd_health():
    """Health check endpoint for the planner service."""
    return {
        "ok": True,
        "status": "healthy",
        "timestamp": time.time(),
        "service": "BaB-ND Planner"
    }

# --------------------------
# Synthetic benchmark
# --------------------------

class SynthRequest(BaseModel):
    d: int = Field(..., ge=1, le=200, description="Dimension of the separable objective")
    method: str = Field("babnd", description="One of: babnd, cem, mppi, gd")
    budget: int = Field(20000, ge=1, le=2_000_000, description="Total sample budget")
    seed: int = 0

class SynthResponse(BaseModel):
    method: str
    d: int
    seed: int
    best_f: float
    gap: float
    samples: int
    wall_ms: float

@app.post("/v1/synth", response_model=SynthResponse)
async def synth(req: SynthRequest):
    """
    One run on sum_i 5x_i^2 + cos(50x_i) over [-1, 1]^d, reporting the gap to the known optimum.
    """
    if req.method not in METHODS:
        raise HTTPException(status_code=422, detail=f"method must be one of {METHODS}")
    try:
        row = await _in_executor(cmd_synth, req.d, req.method, req.budget, req.seed)
    except Exception as e:
        logger.error(f"❌ synth failed: {e}")
        raise HTTPException(status_code=_error_status(e), detail=f"Synthetic run failed: {str(e)}")
    return SynthResponse(**row)

# --------------------------
# Open-loop planning
# --------------------------

class PlanRequest(BaseModel):
    # Problem: either an inline scenario + model document, or a preset with a seeded model
    scenario: Optional[Scenario] = None
    model: Optional[Dict[str, Any]] = Field(None, description="Model JSON document (same format as gen-model)")
    preset: Optional[str] = Field(None, description=f"One of: {', '.join(PRESETS)}")
    model_seed: int = 0
    horizon: Optional[int] = Field(None, ge=1)
    cost_form: Optional[str] = Field(None, description=f"One of: {', '.join(COST_FORMS)}")

    # Planner
    method: str = Field("babnd", description="babnd, cem, mppi, gd, rrt or prm")
    config: PlannerConfig = Field(default_factory=PlannerConfig)
    warm_start: Optional[List[float]] = None

class PlanResponse(BaseModel):
    success: bool
    solution: Dict[str, Any]
    trace: List[Dict[str, Any]]

def _plan_problem(req: PlanRequest):
    if req.preset:
        return resolve_problem(preset=req.preset, model_seed=req.model_seed, horizon=req.horizon,
                               cost_form=req.cost_form)
    if req.scenario is None or req.model is None:
        raise PlannerError("need an inline scenario and model, or a preset")
    sc = req.scenario
    if req.horizon:
        sc = sc.model_copy(update={"horizon": req.horizon, "tracking_weights": None})
    return sc, model_from_document(req.model), req.cost_form or "tracking"

def _run_plan(req: PlanRequest) -> Dict[str, Any]:
    sc, mdl, form = _plan_problem(req)
    warm = None if req.warm_start is None else np.asarray(req.warm_start, dtype=float)
    return cmd_plan(sc, mdl, req.method, form, req.config, warm_start=warm)

@app.post("/v1/plan", response_model=PlanResponse)
async def plan_endpoint(req: PlanRequest):
    """
    Open-loop plan over the unrolled dynamics model. Sampling methods return the action
    sequence and its rollout; rrt/prm return the node path they found.
    """
    if req.method not in METHODS + PATH_METHODS:
        raise HTTPException(status_code=422, detail=f"method must be one of {METHODS + PATH_METHODS}")
    try:
        out = await _in_executor(_run_plan, req)
    except Exception as e:
        logger.error(f"❌ plan failed: {e}")
        raise HTTPException(status_code=_error_status(e), detail=f"Planning failed: {str(e)}")
    trace = _json_records(out["trace"])
    logger.info(f"✅ plan {req.method}: success={out['success']}")
    return PlanResponse(success=out["success"], solution=out["solution"], trace=trace)

# --------------------------
# Bound audit
# --------------------------

class AuditRequest(BaseModel):
    trials: int = Field(20, ge=1, le=500)
    seed: int = 0
    corrupt: bool = False
    samples: int = Field(2000, ge=1, le=100_000)

@app.post("/v1/audit-bounds")
async def audit_bounds(req: AuditRequest):
    """
    Randomized property checks on the bounding code. corrupt=true runs the negative
    control and is expected to report violations.
    """
    try:
        return await _in_executor(cmd_audit_bounds, req.trials, req.seed, corrupt=req.corrupt, samples=req.samples)
    except Exception as e:
        logger.error(f"❌ audit failed: {e}")
        raise HTTPException(status_code=_error_status(e), detail=f"Audit failed: {str(e)}")
