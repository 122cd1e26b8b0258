# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Integration test fixtures."""

import logging

import numpy as np
import pytest

import group_models
from exact_linalg import IntegerMatrix

logger = logging.getLogger(__name__)


@pytest.fixture(scope="module", name="workers")
def workers_fixture(pytestconfig: pytest.Config) -> int:
    """Worker processes used by the sampling runs."""
    workers = pytestconfig.getoption("--workers")
    logger.info("running acceptance checks with %d workers", workers)
    return workers


@pytest.fixture(name="cat_map")
def cat_map_fixture() -> IntegerMatrix:
    """The hyperbolic matrix [[2, 1], [1, 1]]."""
    return IntegerMatrix.from_rows([[2, 1], [1, 1]])


@pytest.fixture(name="rng")
def rng_fixture() -> np.random.Generator:
    """Seeded generator for property checks."""
    return np.random.default_rng(31337)


@pytest.fixture(autouse=True)
def isolated_cache(monkeypatch):
    """Keep Weyl group enumerations out of the user's cache directory."""
    monkeypatch.delenv(group_models.CACHE_DIR_ENV, raising=False)
