"""Base interface for photocount engines."""

import logging
import math
from abc import ABC, abstractmethod
from fractions import Fraction
from typing import Callable, Optional, Union

import numpy as np
from scipy import optimize

from .errors import ConsistencyError
from .stats import DistributionSnapshot

logger = logging.getLogger(__name__)

ScaledTime = Union[float, Fraction]

WAITING_TIME_RTOL = 1e-12
MAX_BRACKET_DOUBLINGS = 2100


def solve_waiting_time(survival: Callable[[float], float], r: float, floor: float,
                       scale: float) -> Optional[float]:
    """
    Solve survival(dtau) = r by bisection.

    Args:
        survival: Decreasing survival probability with survival(0) = 1.
        r: Uniform draw in (0, 1).
        floor: Limit of the survival probability for dtau -> infinity.
        scale: Initial guess for the upper bracket.

    Returns:
        The waiting time, or None when the survival never drops to r.
    """
    if r <= floor:
        return None
    upper = scale if scale > 0 and math.isfinite(scale) else 1.0
    for _ in range(MAX_BRACKET_DOUBLINGS):
        if survival(upper) <= r:
            break
        upper *= 2.0
    else:
        logger.debug(f"Survival stays above r={r!r} up to dtau={upper!r}, treating as no jump")
        return None
    return optimize.bisect(lambda x: survival(x) - r, 0.0, upper, xtol=1e-300,
                           rtol=WAITING_TIME_RTOL, maxiter=4000)


class BaseEngine(ABC):
    """Abstract base class for engines evolving a distribution over the measured variable z."""

    def __init__(self, name: str, z_grid: np.ndarray, step: int):
        self.name = name
        self.z_grid = np.asarray(z_grid, dtype=np.int64)
        self.step = step
        self._z_squared = self.z_grid.astype(float) ** 2

    @property
    @abstractmethod
    def tau(self) -> Fraction:
        """Exact scaled time elapsed."""
        pass

    @property
    @abstractmethod
    def count(self) -> int:
        """Number of photocounts so far."""
        pass

    @abstractmethod
    def log_weights(self) -> np.ndarray:
        """Unnormalized log-probabilities over z_grid."""
        pass

    @abstractmethod
    def advance(self, dtau: ScaledTime) -> None:
        """Evolve without a photocount for scaled time dtau > 0."""
        pass

    @abstractmethod
    def apply_count(self) -> None:
        """Apply the jump operator for one photocount."""
        pass

    def snapshot(self) -> DistributionSnapshot:
        return DistributionSnapshot.from_log_weights(self.z_grid, self.log_weights(), self.step)

    def dark_mass(self) -> float:
        """Probability of z = 0, the component that never emits."""
        return self.snapshot().probability(0)

    def detection_rate(self) -> float:
        """Photocount rate <z^2> per unit of scaled time."""
        return float(self.snapshot().p @ self._z_squared)

    def survival_function(self) -> Callable[[float], float]:
        """No-count probability sum_z p(z) exp(-z^2 dtau) from the current state."""
        p = self.snapshot().p
        z_squared = self._z_squared
        return lambda dtau: float(p @ np.exp(-z_squared * dtau))

    def survival_floor(self) -> float:
        return self.dark_mass()

    def waiting_time(self, r: float) -> Optional[float]:
        """Scaled time until the survival probability falls to r, or None if it never does."""
        rate = self.detection_rate()
        if rate == 0:
            return None
        wait = solve_waiting_time(self.survival_function(), r, self.survival_floor(), 1.0 / rate)
        if wait is not None and wait < 0:
            raise ConsistencyError(f"negative waiting time {wait!r} for r={r!r}")
        return wait

    def sample_next_jump(self, rng: np.random.Generator) -> Optional[float]:
        """Draw one uniform r from rng and return the waiting time to the next count."""
        r = float(rng.random())
        wait = self.waiting_time(r)
        logger.debug(f"{self.name}: r={r!r} -> dtau={wait!r} at tau={float(self.tau)!r}, m={self.count}")
        return wait
