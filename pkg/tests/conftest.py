"""Pytest configuration and shared fixtures.

Fixture files are organized by kind so that configs and distributions can be
reused across test modules.

Structure:
    tests/fixtures/
    ├── configs/              # INI run configurations
    │   ├── minimal.ini
    │   ├── full_minimum.ini
    │   └── ...
    └── distributions/        # Two-column (z, p0) priors
        ├── three_point.txt
        └── ...
"""

import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from atomsqueeze.dynamics import CavityParams
from atomsqueeze.lattice import InitialDistribution, LatticeConfig, initial_distribution


# Get the fixtures directory path
FIXTURES_DIR = Path(__file__).parent / "fixtures"

settings.register_profile("default", max_examples=50, deadline=None)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


# ============================================================================
# Helper Functions
# ============================================================================

def fixture_path(filename: str, kind: str) -> Path:
    """
    Locate a fixture file of a given kind.

    Args:
        filename: The fixture filename (e.g., "minimal.ini")
        kind: Sub-directory of tests/fixtures ("configs" or "distributions")

    Returns:
        Path to the file

    Raises:
        FileNotFoundError: If the fixture file doesn't exist
    """
    path = FIXTURES_DIR / kind / filename
    if not path.exists():
        raise FileNotFoundError(
            f"Fixture not found: {path}\n"
            f"To add this test case, create: {FIXTURES_DIR / kind}/{filename}"
        )
    return path


def load_fixture_file(filename: str, kind: str = "configs") -> str:
    """
    Load a fixture file as text.

    Example:
        text = load_fixture_file("minimal.ini")
        # Loads from: tests/fixtures/configs/minimal.ini
    """
    with open(fixture_path(filename, kind), "r", encoding="utf-8") as f:
        return f.read()


def config_fixture(filename: str) -> Path:
    return fixture_path(filename, "configs")


def distribution_fixture(filename: str) -> Path:
    return fixture_path(filename, "distributions")


def point_mass(z_star: int, z_grid, step: int) -> InitialDistribution:
    """Unit mass at z_star on an explicit grid."""
    z_grid = np.asarray(z_grid)
    return InitialDistribution(z_grid, (z_grid == z_star).astype(float), step)


# ============================================================================
# Lattice and parameter fixtures
# ============================================================================

@pytest.fixture
def small_minimum():
    """N = 2 atoms on K = M = 2 sites."""
    return LatticeConfig(M=2, K=2, N=2)


@pytest.fixture
def three_point_prior(small_minimum):
    """p(-2) = 1/4, p(0) = 1/2, p(2) = 1/4."""
    return initial_distribution('superfluid-min', small_minimum)


@pytest.fixture
def superfluid_prior():
    """Superfluid N = 100 at the diffraction minimum."""
    return initial_distribution('superfluid-min', LatticeConfig(M=100, K=100, N=100))


@pytest.fixture
def reduced_params():
    """kappa = 1, delta_p = 0 and U10 a0 = 1, so C = -i and |C| = 1."""
    return CavityParams(kappa=1.0, delta_p=0.0, delta_a=1.0, g0=1.0, g1=1.0, a0=1.0,
                        dispersive_shift=False)


@pytest.fixture
def oracle_params():
    """Dispersive parameters with a constant shift at the diffraction minimum."""
    return CavityParams(kappa=1.0, delta_p=0.5, delta_a=-50.0, g0=5.0, g1=5.0, a0=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
