"""Shared test fixtures for conformal-verify."""

import os

# Force test settings before any imports
os.environ.setdefault("LOG_LEVEL", "WARNING")
os.environ.setdefault("THREADS", "1")

import numpy as np
import pytest

from app.config import get_settings
from app.models.field import Bubble
from app.schemas.operator import OperatorSpec
from app.services.fields import tuned_bubble
from app.utils.logging import setup_logging
from app.utils.rng import make_rng


@pytest.fixture(autouse=True)
def _clear_settings_cache():
    """Clear the lru_cache on settings between tests."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture(autouse=True, scope="session")
def _quiet_logging():
    setup_logging("WARNING")


# ---------------------------------------------------------------------------
# Randomness
# ---------------------------------------------------------------------------


@pytest.fixture()
def rng() -> np.random.Generator:
    """A fresh PCG64 generator with a fixed seed per test."""
    return make_rng(12345)


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


@pytest.fixture()
def sigma1_n3() -> OperatorSpec:
    return OperatorSpec.sigma_k(3, 1)


@pytest.fixture()
def sigma2_n4() -> OperatorSpec:
    return OperatorSpec.sigma_k(4, 2)


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------


def make_tuned_bubble(spec: OperatorSpec, b: float = 1.0, x0=None) -> Bubble:
    """Bubble solving ``spec`` at level 1, centred at x0 (origin by default)."""
    center = tuple(0.0 for _ in range(spec.n)) if x0 is None else tuple(x0)
    bubble = tuned_bubble(b, center, spec)
    assert isinstance(bubble, Bubble)
    return bubble


@pytest.fixture()
def bubble_n3(sigma1_n3) -> Bubble:
    return make_tuned_bubble(sigma1_n3)


@pytest.fixture()
def bubble_n4(sigma2_n4) -> Bubble:
    return make_tuned_bubble(sigma2_n4, b=1.3, x0=(0.1, -0.2, 0.0, 0.3))


# ---------------------------------------------------------------------------
# Config payloads
# ---------------------------------------------------------------------------


def make_config_payload(**overrides) -> dict:
    """Build a valid check-solution config payload."""
    data = {
        "command": "check-solution",
        "name": "unit",
        "seed": 7,
        "operator": {"family": "sigma_k", "n": 3, "k": 1},
        "field": {"family": "tuned_bubble", "b": 1.0, "x0": [0.0, 0.0, 0.0]},
        "check_solution": {"points": 50, "radius": 1.0},
    }
    data.update(overrides)
    return data
