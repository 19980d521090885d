"""Photocount engine over the atom-number distribution alone.

Between counts each component z decays as exp(-z^2 tau); a count multiplies it by z^2.
The state therefore only needs the prior, the count m and the elapsed scaled time.
"""

import logging
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional

import numpy as np

from .base_engine import BaseEngine, ScaledTime, solve_waiting_time
from .errors import ConfigError, DarkStateError
from .lattice import InitialDistribution
from .stats import DistributionSnapshot, log_posterior_weights

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ReducedState:
    """Prior log-probabilities, photocount m and exact scaled time tau."""

    z_grid: np.ndarray
    log_p0: np.ndarray
    step: int
    m: int = 0
    tau_exact: Fraction = Fraction(0)

    def __post_init__(self):
        if self.m < 0:
            raise ConfigError(f"m: photocount must be >= 0, got {self.m!r}")
        if self.tau_exact < 0:
            raise ConfigError(f"tau: expected tau >= 0, got {float(self.tau_exact)!r}")
        if not np.any(np.isfinite(self.log_p0)):
            raise DarkStateError("reduced state has no finite log-weight")

    @classmethod
    def from_distribution(cls, init: InitialDistribution) -> 'ReducedState':
        return cls(init.z_grid, init.log_p0, init.step)

    @property
    def tau(self) -> float:
        return float(self.tau_exact)

    @property
    def log_w(self) -> np.ndarray:
        return log_posterior_weights(self.z_grid, self.log_p0, self.m, self.tau)

    def distribution(self) -> DistributionSnapshot:
        return DistributionSnapshot.from_log_weights(self.z_grid, self.log_w, self.step)


def advance_no_count(s: ReducedState, dtau: ScaledTime) -> ReducedState:
    """Decrease every log-weight by z^2 dtau."""
    if not dtau > 0:
        raise ConfigError(f"dtau: expected dtau > 0, got {dtau!r}")
    return replace(s, tau_exact=s.tau_exact + Fraction(dtau))


def apply_count(s: ReducedState) -> ReducedState:
    """
    Multiply every weight by z^2, removing the z = 0 component.

    Raises:
        DarkStateError: If all weight sits at z = 0.
    """
    if detection_rate(s) == 0:
        raise DarkStateError("dark state cannot produce a photocount")
    return replace(s, m=s.m + 1)


def detection_rate(s: ReducedState) -> float:
    """<z^2> under the normalized distribution."""
    d = s.distribution()
    return float(d.p @ d.z_grid.astype(float) ** 2)


def sample_next_jump(s: ReducedState, rng: np.random.Generator) -> Optional[float]:
    """
    Draw r ~ U(0, 1) and solve sum_z p(z) exp(-z^2 dtau) = r.

    Returns:
        The scaled waiting time, or None if r is at or below the dark mass p(0).
    """
    d = s.distribution()
    z_squared = d.z_grid.astype(float) ** 2
    r = float(rng.random())
    rate = float(d.p @ z_squared)
    if rate == 0:
        return None
    return solve_waiting_time(lambda x: float(d.p @ np.exp(-z_squared * x)), r, d.probability(0), 1.0 / rate)


class ReducedEngine(BaseEngine):
    """Engine holding a ReducedState and replacing it on every operation."""

    def __init__(self, init: InitialDistribution):
        super().__init__('reduced', init.z_grid, init.step)
        self.state = ReducedState.from_distribution(init)

    @property
    def tau(self) -> Fraction:
        return self.state.tau_exact

    @property
    def count(self) -> int:
        return self.state.m

    def log_weights(self) -> np.ndarray:
        return self.state.log_w

    def snapshot(self) -> DistributionSnapshot:
        return self.state.distribution()

    def advance(self, dtau: ScaledTime) -> None:
        self.state = advance_no_count(self.state, dtau)

    def apply_count(self) -> None:
        self.state = apply_count(self.state)
