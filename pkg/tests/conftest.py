#!/usr/bin/env python3
"""
AffordLab Test Configuration and Shared Fixtures
================================================

Provides shared pytest fixtures for all test modules.
"""

import sys
import os
import pytest

# Add parent directory to Python path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from affordlab.dataset import generate_dataset
from affordlab.encoder import Autoencoder, FeatureBank, ObjectEncoder
from affordlab.geometry import catalog_nonlinear, catalog_standard
from affordlab.planner import _OPTIMUM_CACHE


# ---------------------------------------------------------------------------
# Catalog fixtures
# ---------------------------------------------------------------------------

@pytest.fixture
def standard():
    """Standard catalog keyed by object id."""
    return {s.id: s for s in catalog_standard()}


@pytest.fixture
def nonlinear():
    """Nonlinear catalog keyed by object id."""
    return {s.id: s for s in catalog_nonlinear()}


# ---------------------------------------------------------------------------
# Model fixtures
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def untrained_encoder():
    """Seeded, untrained encoder; features are arbitrary but deterministic."""
    return ObjectEncoder(Autoencoder(seed=7))


@pytest.fixture
def linear_bank(untrained_encoder):
    """Linear-mode feature bank over the untrained encoder."""
    return FeatureBank(untrained_encoder, 'linear')


@pytest.fixture
def nonlinear_bank(untrained_encoder):
    """Nonlinear-mode feature bank over the untrained encoder."""
    return FeatureBank(untrained_encoder, 'nonlinear')


# ---------------------------------------------------------------------------
# Data fixtures
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def linear_records():
    """A small linear dataset from a handful of seeded episodes."""
    return generate_dataset(seed=3, mode='linear', target_records=30, max_episodes=8)


@pytest.fixture(scope="session")
def nonlinear_records():
    """A small nonlinear dataset from a handful of seeded episodes."""
    return generate_dataset(seed=3, mode='nonlinear', target_records=20, max_episodes=6)


@pytest.fixture(autouse=True)
def clear_optimum_cache():
    """Keep brute-force optima from leaking between tests."""
    _OPTIMUM_CACHE.clear()
    yield
    _OPTIMUM_CACHE.clear()
