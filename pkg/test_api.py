#!/usr/bin/env python3
"""
Tests for the FastAPI service: health checks, synthetic runs, inline-scenario plans
and request validation.
"""

from fastapi.testclient import TestClient

from conftest import shift_model, shift_scenario
from main import app
from model_io import model_to_document

client = TestClient(app)

SMALL_CONFIG = {"batch_size": 2, "max_iterations": 3, "seed": 0,
                "searcher": {"kind": "cem", "samples": 60, "iterations": 3, "agents": 2}}


def plan_request(**overrides):
    body = {
        "scenario": shift_scenario([0.2, -0.1], [0.2, -0.1]).model_dump(),
        "model": model_to_document(shift_model()),
        "config": SMALL_CONFIG,
    }
    body.update(overrides)
    return body


def test_health_endpoints():
    assert client.get("/health").json() == {"ok": True}
    body = client.get("/babnd-health").json()
    assert body["status"] == "healthy"
    assert body["service"] == "BaB-ND Planner"


def test_synth_small_budget():
    r = client.post("/v1/synth", json={"d": 1, "method": "cem", "budget": 200, "seed": 1})
    assert r.status_code == 200
    body = r.json()
    assert body["method"] == "cem"
    assert body["gap"] >= -1e-9
    assert body["samples"] <= 200


def test_synth_rejects_unknown_method_and_zero_budget():
    assert client.post("/v1/synth", json={"d": 1, "method": "annealing"}).status_code == 422
    assert client.post("/v1/synth", json={"d": 1, "budget": 0}).status_code == 422


def test_plan_with_inline_scenario():
    r = client.post("/v1/plan", json=plan_request())
    assert r.status_code == 200
    body = r.json()
    assert body["success"]
    assert body["solution"]["uf"] == 0.0
    assert body["solution"]["u"] == [0.0, 0.0]
    assert body["trace"] and body["trace"][0]["iter"] == 0


def test_plan_needs_a_problem():
    r = client.post("/v1/plan", json={"method": "cem"})
    assert r.status_code == 422
    assert "preset" in r.json()["detail"]


def test_plan_rejects_bad_model_document():
    doc = model_to_document(shift_model())
    doc["layers"][0]["b"] = [0.0]
    r = client.post("/v1/plan", json=plan_request(model=doc))
    assert r.status_code == 422


def test_audit_endpoint():
    r = client.post("/v1/audit-bounds", json={"trials": 2, "samples": 100})
    assert r.status_code == 200
    assert r.json()["passed"]
    assert client.post("/v1/audit-bounds", json={"trials": 0}).status_code == 422
