"""Shared fixtures."""

import json
from pathlib import Path

import pytest

from src.simulation import SolverOptions
from src.systems import make_gains, make_system

REPO_ROOT = Path(__file__).parent.parent
EXAMPLE_CONFIGS = sorted((REPO_ROOT / "config" / "experiments").glob("*.*"))

DOMAIN = (0.0, 5.0)


@pytest.fixture
def first_order():
    """y' + t*y = x on [0, 5]."""
    return make_system(["t", "1"], DOMAIN, name="A")


@pytest.fixture
def lag():
    """y' + y = x on [0, 1]."""
    return make_system(["1", "1"], (0.0, 1.0), name="lag")


@pytest.fixture
def constant_gains():
    return make_gains("2", "3", name="constant")


@pytest.fixture
def coarse():
    """Coarse solver for end-to-end runs."""
    return SolverOptions(step=1e-2)


@pytest.fixture
def write_config(tmp_path):
    """Write a document to tmp_path and return its path."""

    def _write(document, name="experiments.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document, indent=2))
        return path

    return _write


@pytest.fixture
def minimal_document():
    return {
        "domain": [0, 5],
        "systems": {"A": {"order": 1, "coeffs": ["t", "1"]}},
        "gains": {"g": {"alpha": "2", "beta": "3"}},
        "experiments": [{"kind": "theorem1", "system": "A", "gains": "g"}],
    }
