import os
import sys
import json
import pytest
from pathlib import Path
from typing import Any, Callable, Dict
from unittest.mock import patch

# Ensure project root is on sys.path so 'levyflow' can be imported in tests
PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from levyflow.core.config import settings
from levyflow.models.arrays import TimeGrid
from levyflow.models.schemas import DriftKind, DriftSpec, LevyFamily, LevyModel, Thresholds
from levyflow.services.shards import ExecutionContext

# Lévy models
@pytest.fixture
def stable_model() -> LevyModel:
    """One-dimensional isotropic 1.5-stable model."""
    return LevyModel(family=LevyFamily.ISOTROPIC_STABLE, dim=1, alpha=1.5)

@pytest.fixture
def cauchy_model() -> LevyModel:
    return LevyModel(family=LevyFamily.ISOTROPIC_STABLE, dim=1, alpha=1.0)

@pytest.fixture
def relativistic_model() -> LevyModel:
    return LevyModel(family=LevyFamily.RELATIVISTIC_STABLE, dim=1, alpha=1.0, m=1.0)

@pytest.fixture
def tempered_model() -> LevyModel:
    return LevyModel(family=LevyFamily.TEMPERED_STABLE, dim=1, alpha=0.7)

@pytest.fixture
def brownian_model() -> LevyModel:
    return LevyModel(family=LevyFamily.BROWNIAN, dim=1)

@pytest.fixture
def silent_model() -> LevyModel:
    """Brownian family with Q = 0, i.e. the zero process."""
    return LevyModel(family=LevyFamily.BROWNIAN, dim=1, q_diag=[0.0])

@pytest.fixture
def compound_model() -> LevyModel:
    return LevyModel(family=LevyFamily.COMPOUND_POISSON, dim=1, scale=2.0)

# Drifts
@pytest.fixture
def zero_drift() -> DriftSpec:
    return DriftSpec(kind=DriftKind.ZERO, dim=1)

@pytest.fixture
def linear_drift() -> DriftSpec:
    """b(x) = x, clipped far outside the region the tests visit."""
    return DriftSpec(kind=DriftKind.LINEAR, dim=1, matrix=[[1.0]])

@pytest.fixture
def sqrt_drift() -> DriftSpec:
    """The Peano drift sqrt|x|."""
    return DriftSpec(kind=DriftKind.SQRT_ABS, dim=1)

@pytest.fixture
def bump_drift() -> DriftSpec:
    return DriftSpec(kind=DriftKind.BUMP, dim=1, radius=1.0, height=1.0)

@pytest.fixture
def holder_drift() -> DriftSpec:
    return DriftSpec(kind=DriftKind.HOLDER_POWER, dim=1, beta=0.75)

# Grids and execution contexts
@pytest.fixture
def small_grid() -> TimeGrid:
    return TimeGrid.uniform(1.0, 128)

@pytest.fixture
def make_context() -> Callable[..., ExecutionContext]:
    """Factory for small single-threaded contexts; keyword arguments override fields."""
    def factory(n_steps: int = 128, t_end: float = 1.0, **changes) -> ExecutionContext:
        values: Dict[str, Any] = {
            "grid": TimeGrid.uniform(t_end, n_steps),
            "tol": 1e-6,
            "max_iter": 200,
            "shards": 2,
            "threads": 1,
            "thresholds": Thresholds(),
        }
        values.update(changes)
        return ExecutionContext(**values)

    return factory

@pytest.fixture
def small_context(make_context) -> ExecutionContext:
    return make_context()

# Configuration files
@pytest.fixture
def write_config(tmp_path) -> Callable[..., Path]:
    """Write a JSON experiment config into tmp_path and return its path."""
    def writer(payload: Dict[str, Any], name: str = "experiment.json") -> Path:
        target = tmp_path / name
        target.write_text(json.dumps(payload), encoding="utf-8")
        return target

    return writer

@pytest.fixture
def small_config() -> Dict[str, Any]:
    """Minimal sample experiment on the zero process."""
    return {
        "experiment": "sample",
        "model": {"family": "brownian", "dim": 1, "q_diag": [0.0]},
        "grid": {"t_end": 1.0, "n_steps": 16},
        "seeds": {"master": 7, "shards": 2},
        "params": {"n_paths": 3},
    }

@pytest.fixture
def mock_settings():
    """Settings with single-threaded execution and a coarse default grid."""
    with patch.object(settings, "threads", 1):
        with patch.object(settings, "default_n_steps", 64):
            yield settings
