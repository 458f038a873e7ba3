"""Pytest configuration for the dspike project.

This file ensures that the project root is on ``sys.path`` so that tests can
import the package without each module having to manipulate ``sys.path``,
and provides a few small data fixtures shared across test modules.
"""

from __future__ import annotations

import sys
import pathlib

# add workspace root to path for test imports
sys.path.insert(0, str(pathlib.Path(__file__).parent.parent))

import numpy as np
import pytest

from dspike.core import EnsembleData
from dspike.simulate import ScenarioSpec, generate_scenario
from dspike.validation import tiny_posterior_fixture


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_data():
    """K = 3, n = 20 panel generated with noise precision 16."""
    return tiny_posterior_fixture(seed=0)


@pytest.fixture
def scenario_data():
    return generate_scenario(ScenarioSpec(id=1, seed=7))


@pytest.fixture
def panel_csv(tmp_path):
    """Small panel on disk with target column ``y`` first."""
    path = tmp_path / "panel.csv"
    path.write_text("y,a,b\n1.0,0.5,1.5\n2.0,2.5,1.0\n3.0,3.0,2.5\n")
    return path


@pytest.fixture
def perfect_panel():
    """Column ``0`` equals ``y`` exactly, column ``1`` is noise."""
    gen = np.random.default_rng(3)
    y = gen.normal(size=30)
    X = np.column_stack([y, gen.normal(size=30), y + gen.normal(0.0, 2.0, size=30)])
    return EnsembleData(X, y)
