"""Pytest configuration for plumeseek tests."""
from __future__ import annotations

import sys
from pathlib import Path

import pytest

# Ensure project root is importable
PROJECT_ROOT = Path(__file__).resolve().parents[1]  # repository root
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from plumeseek.config import SearchConfig  # noqa: E402
from plumeseek.lattice import build_complete_grid, generate_environment  # noqa: E402


@pytest.fixture(scope="session")
def grid9():
    """The reference search area: R0 = 9, open rim, 572 links."""
    return build_complete_grid(9)


@pytest.fixture(scope="session")
def env9(grid9):
    return generate_environment(grid9, 0.35, seed=3)


@pytest.fixture()
def small_config():
    """A cheap scenario: R0 = 4, few particles, short runs."""
    return SearchConfig(
        R0=4,
        p=0.2,
        source=(1, 2),
        start=(4, -2),
        N=200,
        M=20,
        max_steps=15,
    )
