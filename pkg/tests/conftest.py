"""
Shared pytest fixtures for lvat-lab tests.

This file provides common fixtures used across unit, integration, and e2e tests.
Fixtures are automatically discovered by pytest and can be used in any test file.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from lvat_lab.data.datasets import gen_grid_patterns, gen_two_moons, standardize, subsample_labels
from lvat_lab.models.classifier import ClassifierModel
from lvat_lab.models.flow import build_flow
from lvat_lab.models.vae import VaeModel

# ============================================================================
# Sample Data Fixtures
# ============================================================================


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for test inputs."""
    return np.random.default_rng(1234)


@pytest.fixture
def moons():
    """
    Small standardized two-moons training split with 10 labeled rows.

    Returns:
        Dataset with 60 rows, 2 features and 2 classes.
    """
    train, _ = standardize(gen_two_moons(60, noise=0.1, seed=3))
    return subsample_labels(train, 10, seed=0)


@pytest.fixture
def moons_test():
    """Fully labeled two-moons test split."""
    return gen_two_moons(40, noise=0.1, seed=4, split="test")


@pytest.fixture
def grid():
    """
    Small glyph-image dataset.

    Returns:
        Dataset of 24 images of 6x6 pixels in 4 classes.
    """
    return gen_grid_patterns(24, size=6, seed=5, num_classes=4)


# ============================================================================
# Model Fixtures
# ============================================================================


@pytest.fixture
def classifier() -> ClassifierModel:
    """Randomly initialized 2-D, 2-class classifier."""
    return ClassifierModel.build(2, 2, (8,), seed=0)


@pytest.fixture
def classifier_4d() -> ClassifierModel:
    """Randomly initialized 4-D, 3-class classifier."""
    return ClassifierModel.build(4, 3, (8,), seed=1)


@pytest.fixture
def identity_flow():
    """Coupling flow that maps every input to itself."""
    return build_flow(4, n_couplings=2, hidden=(6,), permute=False, seed=0)


@pytest.fixture
def random_flow():
    """Coupling flow with non-trivial conditioners and permutations."""
    return build_flow(4, n_couplings=4, hidden=(8,), seed=2, zero_init=False)


@pytest.fixture
def vae() -> VaeModel:
    """Untrained Gaussian-decoder VAE on 4-D inputs with a 2-D latent."""
    return VaeModel.build(4, 2, (8,), "none", seed=3)


# ============================================================================
# Run Configuration Fixtures
# ============================================================================


@pytest.fixture
def tiny_run_config() -> dict:
    """
    Minimal run configuration that trains in well under a second per seed.

    Returns:
        Dictionary suitable for RunConfig.model_validate.
    """
    return {
        "data": {"dataset": "two_moons", "n_train": 60, "n_test": 40, "n_labeled": 10},
        "transformer": {
            "kind": "flow",
            "n_couplings": 2,
            "hidden": [8],
            "epochs": 2,
            "batch_size": 32,
        },
        "classifier": {"hidden": [8]},
        "regularizer": {"kind": "vat", "epsilon": 0.5},
        "trainer": {
            "total_updates": 20,
            "decay_updates": 5,
            "batch_labeled": 8,
            "batch_unlabeled": 16,
            "eval_every": 10,
            "log_every": 10,
        },
        "seeds": [0],
    }


@pytest.fixture
def write_config(tmp_path: Path):
    """Factory writing a run configuration JSON into the test's tmp directory."""

    def _write(document: dict, name: str = "run.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return path

    return _write


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    """Keep LVAT_* variables of the calling shell out of the tests."""
    for name in ("LVAT_LOG", "LVAT_OUTPUT_DIR", "LVAT_GRADCHECK_STEP", "LVAT_GRADCHECK_TOLERANCE"):
        monkeypatch.delenv(name, raising=False)


# ============================================================================
# Pytest Hooks
# ============================================================================


def pytest_collection_modifyitems(config, items):
    """
    Pytest hook to modify test items after collection.

    Automatically adds markers based on test location.
    """
    for item in items:
        path = Path(str(item.fspath)).parts
        if "unit" in path:
            item.add_marker(pytest.mark.unit)
        elif "integration" in path:
            item.add_marker(pytest.mark.integration)
        elif "e2e" in path:
            item.add_marker(pytest.mark.e2e)
            item.add_marker(pytest.mark.slow)
