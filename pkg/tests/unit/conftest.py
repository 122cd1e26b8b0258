#!/usr/bin/env python3

# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Unit test fixtures."""

import numpy as np
import pytest

from exact_linalg import IntegerMatrix


@pytest.fixture(name="rng")
def rng_fixture() -> np.random.Generator:
    """Seeded random generator, fresh for every test."""
    return np.random.default_rng(20240817)


@pytest.fixture(name="cat_map")
def cat_map_fixture() -> IntegerMatrix:
    """The hyperbolic automorphism [[2, 1], [1, 1]] of Z²."""
    return IntegerMatrix.from_rows([[2, 1], [1, 1]])


@pytest.fixture(name="cache_dir", autouse=True)
def cache_dir_fixture(monkeypatch, tmp_path):
    """Keep Weyl enumeration caches out of the user's environment."""
    monkeypatch.delenv("CHARVAR_CACHE_DIR", raising=False)
    return tmp_path / "weyl-cache"
