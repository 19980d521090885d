"""Closed-form cavity amplitudes, phase exponents and conditional states of the atom-cavity system.

All light amplitudes live in the frame rotating at the probe frequency, so optical
frequencies enter only through the probe-cavity detuning delta_p.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy import integrate
from scipy.special import expm1, logsumexp

from .errors import ConfigError, ConsistencyError, DarkStateError, ResonanceError
from .lattice import (FockConfiguration, InitialDistribution, ModeProfile,
                      coupling_coefficients, occupation_matrix)

logger = logging.getLogger(__name__)

ArrayLike = Union[complex, np.ndarray]

STEADY = 'steady'
TRANSIENT = 'transient'
REGIMES = (STEADY, TRANSIENT)

QUADRATURE_RTOL = 1e-10
QUADRATURE_ATOL = 1e-12


def _scalar(value):
    return complex(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class CavityParams:
    """Physical constants of the probe, the cavity and the atom-light coupling (rates in 1/time)."""

    kappa: float
    delta_p: float
    delta_a: float
    g0: float
    g1: float
    a0: complex = 1.0
    eta: complex = 0.0
    alpha0: complex = 0.0
    dispersive_shift: bool = True

    def __post_init__(self):
        for name in ('kappa', 'delta_p', 'delta_a', 'g0', 'g1'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)) \
                    or not math.isfinite(value):
                raise ConfigError(f"physical.{name}: expected a finite real number, got {value!r}")
        for name in ('a0', 'eta', 'alpha0'):
            if not np.isfinite(complex(getattr(self, name))):
                raise ConfigError(f"physical.{name}: expected a finite number, got {getattr(self, name)!r}")
        if self.kappa < 0:
            raise ConfigError(f"physical.kappa: cavity decay rate must be >= 0, got {self.kappa!r}")
        if self.delta_a == 0:
            raise ConfigError("physical.delta_a: cavity-atom detuning must be non-zero")
        if not (math.isfinite(self.U10) and math.isfinite(self.U11)):
            raise ConfigError(f"physical: U_lm = g_l g_m / delta_a is not finite for delta_a={self.delta_a!r}")

    @classmethod
    def for_unitary(cls, delta_p: float, coupling: float) -> 'CavityParams':
        """Lossless transverse probing (kappa = eta = 0, U11 neglected) with U10 a0 / delta_p = coupling."""
        if delta_p == 0:
            raise ConfigError(f"delta_p: lossless probing needs a non-zero detuning, got {delta_p!r}")
        return cls(kappa=0.0, delta_p=delta_p, delta_a=1.0, g0=coupling, g1=1.0, a0=delta_p,
                   dispersive_shift=False)

    @property
    def U10(self) -> float:
        return self.g1 * self.g0 / self.delta_a

    @property
    def U11(self) -> float:
        return self.g1 * self.g1 / self.delta_a if self.dispersive_shift else 0.0

    @property
    def reduced_C(self) -> complex:
        """C = i U10 a0 / (i delta_p - kappa): light amplitude per unit of D_10 in steady state."""
        denominator = 1j * self.delta_p - self.kappa
        if denominator == 0:
            raise ResonanceError("resonance singularity: kappa = 0 and delta_p = 0")
        return 1j * self.U10 * complex(self.a0) / denominator

    @property
    def unitary_C(self) -> complex:
        """C = U10 a0 / delta_p of the lossless model."""
        if self.delta_p == 0:
            raise ResonanceError("resonance singularity: delta_p = 0 in the lossless model")
        return self.U10 * complex(self.a0) / self.delta_p

    @property
    def tau_rate(self) -> float:
        """2 |C|^2 kappa, the factor converting time into scaled time."""
        return 2.0 * abs(self.reduced_C) ** 2 * self.kappa

    def tau_from_time(self, t):
        return self.tau_rate * t

    def time_from_tau(self, tau):
        rate = self.tau_rate
        if rate == 0:
            raise ConfigError("physical: 2|C|^2 kappa = 0, scaled time does not advance")
        return tau / rate

    def drive(self, D10: ArrayLike) -> ArrayLike:
        """eta - i U10 a0 D_10, the total drive of configuration q."""
        return self.eta - 1j * self.U10 * self.a0 * np.asarray(D10)


@dataclass(frozen=True)
class ComponentSolution:
    """Cavity amplitude and phase exponent attached to one atom configuration."""

    alpha: complex
    phi: complex


def steady_amplitude(p: CavityParams, D10: ArrayLike, D11: ArrayLike) -> ArrayLike:
    """
    Lorentzian steady-state cavity amplitude of a configuration.

    Args:
        p: Cavity parameters.
        D10: Probe-cavity coupling coefficient(s).
        D11: Dispersive coupling coefficient(s).

    Returns:
        alpha_q = (eta - i U10 a0 D10) / (i (U11 D11 - delta_p) + kappa).

    Raises:
        ResonanceError: If the denominator is exactly zero.
    """
    denominator = 1j * (p.U11 * np.asarray(D11) - p.delta_p) + p.kappa
    if np.any(denominator == 0):
        raise ResonanceError("resonance singularity: kappa = 0 and U11 D11 = delta_p")
    return _scalar(p.drive(D10) / denominator)


def _decay_exponent(p: CavityParams, D11: ArrayLike) -> ArrayLike:
    return 1j * (p.delta_p - p.U11 * np.asarray(D11)) - p.kappa


def _exp_integral(rate, t: float):
    """Integral of exp(rate * s) over [0, t]."""
    rate = np.asarray(rate)
    safe = np.where(rate == 0, 1.0, rate)
    return np.where(rate == 0, t, expm1(safe * t) / safe)


def transient_amplitude(p: CavityParams, D10: ArrayLike, D11: ArrayLike, t: float) -> ArrayLike:
    """Cavity amplitude relaxing from alpha0 towards the steady state with rate kappa."""
    if t < 0:
        raise ConfigError(f"t: expected t >= 0, got {t!r}")
    steady = steady_amplitude(p, D10, D11)
    return _scalar(steady + (p.alpha0 - steady) * np.exp(_decay_exponent(p, D11) * t))


def phase_exponent_steady(p: CavityParams, D10: ArrayLike, alpha: ArrayLike, t: float) -> ArrayLike:
    """Phi_q(t) = -|alpha|^2 kappa t + (eta alpha* - i U10 a0 D10 alpha* - c.c.) t / 2."""
    alpha = np.asarray(alpha)
    rate = -p.kappa * np.abs(alpha) ** 2 + 1j * np.imag(p.drive(D10) * np.conj(alpha))
    return _scalar(rate * t)


def _phase_integrand(p: CavityParams, D10: complex, D11: complex, s: float) -> complex:
    alpha = transient_amplitude(p, D10, D11, s)
    drive = complex(p.drive(D10))
    return 0.5 * (drive * np.conj(alpha) - np.conj(drive) * alpha) - p.kappa * abs(alpha) ** 2


def phase_exponent_transient(p: CavityParams, D10: ArrayLike, D11: ArrayLike, t: float,
                             validate: bool = False) -> ArrayLike:
    """
    Integrate the phase exponent along the transient amplitude alpha_q(t).

    With alpha(s) = S + B exp(lambda s) the integral is a sum of exponential
    antiderivatives, evaluated in closed form.

    Args:
        p: Cavity parameters.
        D10, D11: Coupling coefficient(s) of the configuration(s).
        t: Elapsed time, t >= 0.
        validate: Cross-check a scalar result against adaptive quadrature.

    Raises:
        ConsistencyError: If validation disagrees beyond 1e-10 relative.
    """
    if t < 0:
        raise ConfigError(f"t: expected t >= 0, got {t!r}")
    steady = np.asarray(steady_amplitude(p, D10, D11))
    offset = p.alpha0 - steady
    rate = _decay_exponent(p, D11)
    drive = p.drive(D10)
    e1 = _exp_integral(rate, t)
    e2 = _exp_integral(2.0 * np.real(rate), t).real

    phi = (1j * np.imag(drive * np.conj(steady)) * t
           + 1j * np.imag(drive * np.conj(offset) * np.conj(e1))
           - p.kappa * (np.abs(steady) ** 2 * t + 2.0 * np.real(np.conj(steady) * offset * e1)
                        + np.abs(offset) ** 2 * e2))
    phi = _scalar(phi)

    if validate:
        if np.ndim(phi) != 0:
            raise ConfigError("quadrature validation needs scalar coupling coefficients")
        options = dict(limit=400, epsabs=1e-14, epsrel=1e-12)
        real, _ = integrate.quad(lambda s: _phase_integrand(p, D10, D11, s).real, 0.0, t, **options)
        imag, _ = integrate.quad(lambda s: _phase_integrand(p, D10, D11, s).imag, 0.0, t, **options)
        reference = complex(real, imag)
        if abs(phi - reference) > QUADRATURE_ATOL + QUADRATURE_RTOL * abs(reference):
            raise ConsistencyError(f"transient phase {phi!r} disagrees with quadrature {reference!r} at t={t!r}")
        logger.debug(f"Transient phase at t={t} validated against quadrature: {phi}")
    return phi


def unitary_amplitude(p: CavityParams, D10: ArrayLike, t: float) -> ArrayLike:
    """Lossless cavity amplitude C D10 (1 - exp(i delta_p t))."""
    return _scalar(p.unitary_C * np.asarray(D10) * -expm1(1j * p.delta_p * t))


def unitary_phase(p: CavityParams, D10: ArrayLike, t: float) -> ArrayLike:
    """Purely imaginary lossless phase -i delta_p |C D10|^2 t + i |C D10|^2 sin(delta_p t)."""
    strength = np.abs(p.unitary_C * np.asarray(D10)) ** 2
    return _scalar(1j * (strength * math.sin(p.delta_p * t) - p.delta_p * strength * t))


@dataclass(frozen=True, eq=False)
class ConditionalState:
    """Superposition of atom configurations with their coherent cavity amplitudes.

    log_weights holds ln(c_q^0 prod_i alpha_q(t_i) e^{Phi_q(t)}); log_norm is ln F(t).
    """

    configurations: Tuple[FockConfiguration, ...]
    log_weights: np.ndarray
    alphas: np.ndarray
    phis: np.ndarray
    log_norm: float

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def norm(self) -> float:
        return math.exp(self.log_norm)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.exp(self.log_weights - self.log_norm)

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(2.0 * (self.log_weights.real - self.log_norm))

    def components(self) -> List[Tuple[FockConfiguration, ComponentSolution]]:
        return [(q, ComponentSolution(complex(a), complex(f)))
                for q, a, f in zip(self.configurations, self.alphas, self.phis)]


def _log(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide='ignore'):
        return np.log(np.asarray(values, dtype=complex))


def _log_power(values: np.ndarray, m: int) -> np.ndarray:
    """ln(values^m) with ln 0 = -inf and phase 0 on vanishing entries."""
    values = np.asarray(values, dtype=complex)
    with np.errstate(divide='ignore'):
        return m * np.log(np.abs(values)) + 1j * (m * np.angle(values))


def _assemble(configurations, log_weights, alphas, phis, log_norm=None) -> ConditionalState:
    if not np.any(np.isfinite(log_weights.real)):
        raise DarkStateError("all conditional weights vanish")
    if log_norm is None:
        log_norm = 0.5 * float(logsumexp(2.0 * log_weights.real))
    return ConditionalState(tuple(configurations), log_weights, np.asarray(alphas), np.asarray(phis), log_norm)


def conditional_state(amplitudes: np.ndarray, configurations: Sequence[FockConfiguration],
                      modes: ModeProfile, K: int, params: CavityParams,
                      jump_times: Sequence[float] = (), t: float = 0.0,
                      regime: str = TRANSIENT) -> ConditionalState:
    """
    State conditioned on photocounts at jump_times and no other count up to t.

    Args:
        amplitudes: Initial amplitudes c_q^0 aligned with configurations.
        configurations: Fock basis.
        modes: Mode functions defining D_10 and D_11.
        K: Number of illuminated sites.
        params: Cavity parameters.
        jump_times: Ordered photocount times t_1 <= ... <= t_m <= t.
        t: Current time.
        regime: 'transient' uses alpha_q(t_i) and the integrated phase; 'steady'
            uses alpha_q^m and the linear-in-time phase.

    Returns:
        The ConditionalState with its normalization F(t).
    """
    jump_times = [float(x) for x in jump_times]
    if any(b < a for a, b in zip(jump_times, jump_times[1:])) or (jump_times and (jump_times[0] < 0 or jump_times[-1] > t)):
        raise ConfigError(f"jump times must satisfy 0 <= t_1 <= ... <= t_m <= t={t!r}, got {jump_times}")
    if regime not in REGIMES:
        raise ConfigError(f"regime: expected one of {REGIMES}, got {regime!r}")

    occupations = occupation_matrix(configurations)
    d10 = coupling_coefficients(occupations, modes, 1, 0, K)
    d11 = coupling_coefficients(occupations, modes, 1, 1, K)
    log_weights = _log(amplitudes)

    if regime == STEADY:
        alphas = np.asarray(steady_amplitude(params, d10, d11))
        if jump_times:
            log_weights = log_weights + _log_power(alphas, len(jump_times))
        phis = np.asarray(phase_exponent_steady(params, d10, alphas, t))
    else:
        for t_jump in jump_times:
            log_weights = log_weights + _log(transient_amplitude(params, d10, d11, t_jump))
        alphas = np.asarray(transient_amplitude(params, d10, d11, t))
        phis = np.asarray(phase_exponent_transient(params, d10, d11, t))

    logger.debug(f"Conditional state after {len(jump_times)} counts at t={t} ({regime})")
    return _assemble(configurations, log_weights + phis, alphas, phis)


def unitary_state(amplitudes: np.ndarray, configurations: Sequence[FockConfiguration],
                  modes: ModeProfile, K: int, params: CavityParams, t: float) -> ConditionalState:
    """Lossless state without photocounts; the phases are imaginary so F(t) = 1."""
    d10 = coupling_coefficients(occupation_matrix(configurations), modes, 1, 0, K)
    phis = np.asarray(unitary_phase(params, d10, t))
    alphas = np.asarray(unitary_amplitude(params, d10, t))
    return _assemble(configurations, _log(amplitudes) + phis, alphas, phis, log_norm=0.0)


def revival_time(params: CavityParams) -> float:
    """t_rev = 2 pi / (delta_p |C|^2), when every integer N_K has rephased."""
    rate = params.delta_p * abs(params.unitary_C) ** 2
    if rate == 0:
        raise ConfigError("delta_p C^2 = 0: the quadratic phase never revives")
    return 2.0 * math.pi / abs(rate)


def coherence_proxy(distribution: InitialDistribution, params: CavityParams, t):
    """
    Q(t) = |sum_N p0(N) exp(-i delta_p C^2 N^2 t)|, the rephasing of the atom-number components.

    Args:
        distribution: Prior over the illuminated atom number N_K (integer grid).
        params: Lossless cavity parameters.
        t: Time or array of times.

    Returns:
        Q(t) in [0, 1], a float for scalar t.
    """
    t_rev = revival_time(params)
    n_squared = distribution.z_grid.astype(float) ** 2
    # Phases in units of full turns, reduced mod 1 before exponentiating
    turns = np.mod(np.multiply.outer(np.asarray(t, dtype=float) / t_rev, n_squared), 1.0)
    q = np.abs(np.exp(-2j * np.pi * turns) @ distribution.p0)
    q = np.minimum(q, 1.0)
    return float(q) if np.ndim(q) == 0 else q
