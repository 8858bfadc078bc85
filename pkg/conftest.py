# conftest.py
# Shared pytest fixtures: tiny hand-built dynamics models and scenarios with known answers.

import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest

from model_io import MlpLayer, MlpModel, Obstacle, Scenario


def shift_model(k: int = 2) -> MlpModel:
    """x' = x + u for a single k-dim keypoint (residual, one linear layer, no ReLU)."""
    W = np.hstack([np.zeros((k, k)), np.eye(k)])
    return MlpModel((MlpLayer(W, np.zeros(k), relu=False),), residual=True)


def shift_scenario(x0, target, horizon: int = 1, bound: float = 0.5, obstacles=None, p0=None) -> Scenario:
    k = len(x0)
    return Scenario(
        name="shift",
        x0=list(x0),
        x_target=list(target),
        horizon=horizon,
        action_lower=[-bound] * k,
        action_upper=[bound] * k,
        p0=list(p0) if p0 is not None else [0.0] * k,
        obstacles=[Obstacle(**o) for o in (obstacles or [])],
    )


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    """Serial, bit-exact evaluation unless a test opts back into threads."""
    monkeypatch.setenv("BABND_THREADS", "1")


@pytest.fixture
def identity_model() -> MlpModel:
    return shift_model(2)


@pytest.fixture
def at_target() -> Scenario:
    return shift_scenario([0.2, -0.1], [0.2, -0.1], horizon=1)
