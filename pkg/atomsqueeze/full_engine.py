"""Photocount engine over the full Fock-configuration superposition."""

import logging
from fractions import Fraction
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .base_engine import BaseEngine, ScaledTime
from .dynamics import (REGIMES, STEADY, CavityParams, ConditionalState, conditional_state,
                       steady_amplitude)
from .errors import ConfigError, DarkStateError
from .lattice import (DEFAULT_BASIS_CAP, FockConfiguration, LatticeConfig, ModeProfile,
                      coupling_coefficients, enumerate_configurations, geometry_grid,
                      initial_amplitudes, occupation_matrix)

logger = logging.getLogger(__name__)

COUPLING_RTOL = 1e-12
# Scaled-time horizon at which every emitting component has decayed
FLOOR_HORIZON = 50.0


def effective_coupling(params: CavityParams, d10: np.ndarray, d11: np.ndarray) -> complex:
    """
    Ratio C_eff = alpha_q / D10 of the steady amplitudes, required equal for every configuration.

    Raises:
        ConfigError: If the amplitudes are not proportional to D10.
    """
    alphas = np.asarray(steady_amplitude(params, d10, d11), dtype=complex).ravel()
    d10 = np.asarray(d10, dtype=complex).ravel()
    emitting = np.abs(d10) > 0
    if not np.any(emitting):
        raise ConfigError("no configuration couples to the cavity (all D10 = 0)")
    if np.any(np.abs(alphas[~emitting]) > 0):
        raise ConfigError("physical: configurations with D10 = 0 scatter light; set eta = 0")
    ratios = alphas[emitting] / d10[emitting]
    c_eff = complex(ratios[0])
    if np.any(np.abs(ratios - c_eff) > COUPLING_RTOL * abs(c_eff)):
        raise ConfigError("physical: cavity amplitude is not proportional to D10; "
                          "set dispersive_shift = false or use a geometry with constant D11")
    return c_eff


def _group_logsumexp(values: np.ndarray, index: np.ndarray, size: int) -> np.ndarray:
    out = np.full(size, -np.inf)
    for g in np.unique(index):
        out[g] = logsumexp(values[index == g])
    return out


class FullEngine(BaseEngine):
    """
    Engine evolving every Fock configuration with its own cavity amplitude.

    Time is reported in scaled units tau = 2 kappa |C_eff|^2 t. In the steady regime a
    count multiplies configuration q by alpha_q; in the transient regime by alpha_q(t_i),
    with the phase integrated along the relaxing amplitude.
    """

    def __init__(self, cfg: LatticeConfig, modes: ModeProfile, params: CavityParams,
                 initial: str = 'superfluid', amplitudes: Optional[np.ndarray] = None,
                 regime: str = STEADY, cap: int = DEFAULT_BASIS_CAP,
                 configurations: Optional[Sequence[FockConfiguration]] = None):
        if modes.step is None:
            raise ConfigError("full engine needs a diffraction maximum or minimum mode preset")
        if regime not in REGIMES:
            raise ConfigError(f"regime: expected one of {REGIMES}, got {regime!r}")
        if params.kappa == 0:
            raise ConfigError("physical.kappa: scaled time does not advance for kappa = 0")

        grid = geometry_grid(cfg, modes.preset)
        super().__init__('full', grid, modes.step)
        self.cfg = cfg
        self.modes = modes
        self.params = params
        self.regime = regime
        self.configurations = list(configurations) if configurations is not None \
            else enumerate_configurations(cfg, cap)
        self.amplitudes = initial_amplitudes(initial, cfg, self.configurations) if amplitudes is None \
            else np.asarray(amplitudes, dtype=complex)

        occupations = occupation_matrix(self.configurations)
        d10 = coupling_coefficients(occupations, modes, 1, 0, cfg.K)
        d11 = coupling_coefficients(occupations, modes, 1, 1, cfg.K)
        z = d10.real
        if np.any(np.abs(d10.imag) > 0) or np.any(z != np.round(z)):
            raise ConfigError("full engine needs integer real D10 for every configuration")
        self._index = np.round((z - grid[0]) / modes.step).astype(np.int64)
        self.c_eff = effective_coupling(params, d10, d11)
        self.tau_rate = 2.0 * params.kappa * abs(self.c_eff) ** 2

        self._tau = Fraction(0)
        self._jump_times: List[float] = []
        self._cache = None
        logger.debug(f"Full engine over {len(self.configurations)} configurations, "
                     f"C_eff={self.c_eff}, regime={regime}")

    @property
    def tau(self) -> Fraction:
        return self._tau

    @property
    def count(self) -> int:
        return len(self._jump_times)

    @property
    def time(self) -> float:
        """Physical time t = tau / (2 kappa |C_eff|^2)."""
        return float(self._tau) / self.tau_rate

    def state_at(self, t: float) -> ConditionalState:
        return conditional_state(self.amplitudes, self.configurations, self.modes, self.cfg.K,
                                 self.params, self._jump_times, t, self.regime)

    def state(self) -> ConditionalState:
        key = (self._tau, self.count)
        if self._cache is None or self._cache[0] != key:
            self._cache = (key, self.state_at(self.time))
        return self._cache[1]

    def log_weights(self) -> np.ndarray:
        return _group_logsumexp(2.0 * self.state().log_weights.real, self._index, self.z_grid.size)

    def advance(self, dtau: ScaledTime) -> None:
        if not dtau > 0:
            raise ConfigError(f"dtau: expected dtau > 0, got {dtau!r}")
        self._tau += Fraction(dtau)

    def apply_count(self) -> None:
        if self.regime == STEADY and self.detection_rate() == 0:
            raise DarkStateError("dark state cannot produce a photocount")
        self._jump_times.append(self.time)
        try:
            self.state()
        except DarkStateError:
            self._jump_times.pop()
            self._cache = None
            raise DarkStateError("dark state cannot produce a photocount")

    def survival_function(self) -> Callable[[float], float]:
        if self.regime == STEADY:
            return super().survival_function()
        t0 = self.time
        log_norm0 = self.state().log_norm
        return lambda dtau: float(np.exp(2.0 * (self.state_at(t0 + dtau / self.tau_rate).log_norm - log_norm0)))

    def survival_floor(self) -> float:
        if self.regime == STEADY:
            return super().survival_floor()
        nonzero = self._z_squared[self._z_squared > 0]
        horizon = FLOOR_HORIZON / nonzero.min() + FLOOR_HORIZON * self.tau_rate / self.params.kappa
        try:
            return self.survival_function()(horizon)
        except DarkStateError:
            return 0.0
