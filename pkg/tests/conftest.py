"""Shared fixtures for the condensation-lab test suite."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from offspring import build_heavy_tail  # noqa: E402

# small kmax keeps table construction fast; c and mu_0 do not depend on it
SMALL_KMAX = 10_000


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo tests taking more than a few seconds")


@pytest.fixture(scope="session")
def dist():
    """theta = 2.5, m = 0.5: finite variance."""
    return build_heavy_tail(2.5, 0.5, kmax=SMALL_KMAX)


@pytest.fixture(scope="session")
def dist_stable():
    """theta = 1.5, m = 0.5: infinite variance."""
    return build_heavy_tail(1.5, 0.5, kmax=SMALL_KMAX)


@pytest.fixture(scope="session")
def dist_three():
    """theta = 3, m = 0.5."""
    return build_heavy_tail(3.0, 0.5, kmax=SMALL_KMAX)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
