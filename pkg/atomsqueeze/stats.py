"""Moments, width estimators and regime fits for atom-number distributions."""

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence, Tuple

import numpy as np
from scipy import stats as sps
from scipy.special import softmax

from .errors import ConfigError, DarkStateError, RegimeNotReachedError
from .lattice import NORMALIZATION_TOLERANCE, InitialDistribution

if TYPE_CHECKING:
    from .trajectory import TrajectoryRecord

logger = logging.getLogger(__name__)

# Variances below this are dominated by rounding of the normalized weights
VARIANCE_FLOOR = 1e-250
MIN_FIT_POINTS = 3
# width * sqrt(tau) must stay within this fraction of its mean over at least a decade of tau
SQRT_TOLERANCE = 0.15
SQRT_MIN_RATIO = 10.0


@dataclass(frozen=True, eq=False)
class DistributionSnapshot:
    """Normalized probabilities over an integer grid with step Z."""

    z_grid: np.ndarray
    p: np.ndarray
    step: int

    def __post_init__(self):
        z = np.asarray(self.z_grid, dtype=np.int64)
        p = np.asarray(self.p, dtype=float)
        if z.shape != p.shape or z.ndim != 1:
            raise ConfigError(f"snapshot grid and probabilities differ in shape: {z.shape} vs {p.shape}")
        if np.any(p < 0) or abs(math.fsum(p) - 1.0) > NORMALIZATION_TOLERANCE:
            raise ConfigError("snapshot probabilities must be non-negative and sum to 1")
        z.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, 'z_grid', z)
        object.__setattr__(self, 'p', p)

    @classmethod
    def from_log_weights(cls, z_grid: np.ndarray, log_weights: np.ndarray, step: int) -> 'DistributionSnapshot':
        if not np.any(np.isfinite(log_weights)):
            raise DarkStateError("no grid point carries weight")
        return cls(z_grid, softmax(log_weights), step)

    @classmethod
    def from_initial(cls, init: InitialDistribution) -> 'DistributionSnapshot':
        return cls(init.z_grid, init.p0, init.step)

    def probability(self, z: int) -> float:
        matches = np.flatnonzero(self.z_grid == z)
        return float(self.p[matches[0]]) if matches.size else 0.0


@dataclass(frozen=True)
class Moments:
    """Mean and variance of z and of |z|."""

    mean_z: float
    var_z: float
    mean_abs_z: float
    var_abs_z: float

    @property
    def width_abs(self) -> float:
        return math.sqrt(self.var_abs_z)


@dataclass(frozen=True)
class RegimeFit:
    """Least-squares line over a window [tau_lo, tau_hi] of a trajectory."""

    window: Tuple[float, float]
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    spread: float = 0.0

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise ConfigError(f"regime window must satisfy tau_lo < tau_hi, got {self.window}")
        object.__setattr__(self, 'r_squared', min(max(self.r_squared, 0.0), 1.0))


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    p_value: float


def log_posterior_weights(z_grid: np.ndarray, log_p0: np.ndarray, m: int, tau: float) -> np.ndarray:
    """ln of z^{2m} e^{-z^2 tau} p0(z), with ln 0 = -inf."""
    z = np.asarray(z_grid, dtype=float)
    if m > 0:
        with np.errstate(divide='ignore'):
            count_term = 2 * m * np.log(np.abs(z))
    else:
        count_term = np.zeros_like(z)
    return log_p0 + count_term - z * z * tau


def closed_form_distribution(init: InitialDistribution, m: int, tau: float) -> DistributionSnapshot:
    """Distribution after m photocounts and scaled time tau, starting from init."""
    log_w = log_posterior_weights(init.z_grid, init.log_p0, m, tau)
    return DistributionSnapshot.from_log_weights(init.z_grid, log_w, init.step)


def moments(d: DistributionSnapshot) -> Moments:
    """
    Weighted moments of z and |z|.

    Variances are two-pass sums of squared deviations, accurate down to the
    exponentially small tails of a collapsed distribution.
    """
    z = d.z_grid.astype(float)
    mean = float(d.p @ z)
    var = float(d.p @ (z - mean) ** 2)
    a = np.abs(z)
    mean_abs = float(d.p @ a)
    var_abs = float(d.p @ (a - mean_abs) ** 2)
    return Moments(mean, var, mean_abs, var_abs)


def fold(d: DistributionSnapshot) -> DistributionSnapshot:
    """Distribution of |z|."""
    grid, inverse = np.unique(np.abs(d.z_grid), return_inverse=True)
    p = np.bincount(inverse.ravel(), weights=d.p, minlength=grid.size)
    return DistributionSnapshot(grid, p / math.fsum(p), d.step)


def peak(d: DistributionSnapshot) -> int:
    """Grid point of maximal probability (the smallest one on ties)."""
    return int(d.z_grid[int(np.argmax(d.p))])


def three_point_variance(d: DistributionSnapshot, z0: int, Z: Optional[int] = None) -> float:
    """
    Variance estimate Z^2 [p(z0 - Z) + p(z0 + Z)] of a distribution concentrated at z0.

    Neighbours beyond the edge of the grid carry no probability.

    Raises:
        ConfigError: If z0 is not a grid point.
    """
    Z = d.step if Z is None else Z
    if z0 not in d.z_grid:
        raise ConfigError(f"z0={z0!r} is off the distribution grid")
    return Z * Z * (d.probability(z0 - Z) + d.probability(z0 + Z))


def peak_estimate(m: int, tau: float) -> float:
    """Central value sqrt(m / tau) of the collapsed distribution."""
    if m < 0:
        raise ConfigError(f"m: photocount must be >= 0, got {m!r}")
    if tau <= 0:
        raise ConfigError(f"tau: expected tau > 0, got {tau!r}")
    return math.sqrt(m / tau)


def fwhm_estimate(tau: float) -> float:
    """Continuous-regime full width at half maximum sqrt(2 ln 2 / tau)."""
    if tau <= 0:
        raise ConfigError(f"tau: expected tau > 0, got {tau!r}")
    return math.sqrt(2.0 * math.log(2.0) / tau)


def measured_fwhm(d: DistributionSnapshot) -> Optional[float]:
    """
    FWHM of the highest peak, interpolating linearly between grid points.

    Returns:
        The width, or None when it is not above 3Z or the peak has no
        half-maximum crossing on one side.
    """
    z = d.z_grid.astype(float)
    p = d.p
    top = int(np.argmax(p))
    half = p[top] / 2.0

    left = top
    while left >= 0 and p[left] > half:
        left -= 1
    right = top
    while right < p.size and p[right] > half:
        right += 1
    if left < 0 or right >= p.size:
        return None

    z_left = z[left] + (half - p[left]) / (p[left + 1] - p[left]) * (z[left + 1] - z[left])
    z_right = z[right - 1] + (p[right - 1] - half) / (p[right - 1] - p[right]) * (z[right] - z[right - 1])
    width = float(z_right - z_left)
    if width <= 3 * d.step:
        logger.debug(f"FWHM {width:.3g} is not above 3Z={3 * d.step}; variance is authoritative")
        return None
    return width


def _regime_columns(record: 'TrajectoryRecord'):
    return record.column('tau'), record.column('var_z'), record.column('var_abs_z')


def likelihood_width(z_grid: np.ndarray, m: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """
    Standard deviation of |z| under the count likelihood z^{2m} e^{-z^2 tau} alone.

    This is the width of the posterior peak with the prior divided out, one
    value per (m, tau) pair. Ties between +z and -z fold onto one point.
    """
    a, multiplicity = np.unique(np.abs(np.asarray(z_grid, dtype=np.int64)), return_counts=True)
    a = a.astype(float)
    m = np.asarray(m, dtype=float)[:, None]
    tau = np.asarray(tau, dtype=float)[:, None]
    with np.errstate(divide='ignore', invalid='ignore'):
        count_term = np.where(m > 0, 2.0 * m * np.log(a), 0.0)
    p = softmax(count_term - a * a * tau + np.log(multiplicity), axis=1)
    mean = p @ a
    return np.sqrt(np.einsum('ij,ij->i', p, (a[None, :] - mean[:, None]) ** 2))


def _widest_flat_window(tau: np.ndarray, scaled: np.ndarray, tolerance: float) -> Tuple[int, int]:
    """Indices [a, b] of the widest tau ratio over which scaled stays within tolerance of its mean."""
    best, best_ratio = (0, 0), 1.0
    for a in range(tau.size):
        if tau[-1] / tau[a] <= best_ratio:
            break
        seg = scaled[a:]
        mean = np.cumsum(seg) / np.arange(1, seg.size + 1)
        spread = np.maximum(np.maximum.accumulate(seg) / mean - 1.0, 1.0 - np.minimum.accumulate(seg) / mean)
        b = a + int(np.flatnonzero(spread <= tolerance)[-1])
        if tau[b] / tau[a] > best_ratio:
            best, best_ratio = (a, b), tau[b] / tau[a]
    return best


def fit_sqrt_regime(record: 'TrajectoryRecord', sigma0: Optional[float] = None,
                    tolerance: float = SQRT_TOLERANCE, min_ratio: float = SQRT_MIN_RATIO) -> RegimeFit:
    """
    Fit ln(width) against ln(tau) over the widest window where width * sqrt(tau) is flat.

    The window starts once sqrt(var |z|) has dropped below sigma0/3, with sigma0
    defaulting to sqrt(var z) of the first sample. The width fitted is the peak
    width of the count likelihood at each sample's (m, tau); a 1/sqrt(tau) law
    gives slope -1/2. `spread` is the largest relative deviation of
    width * sqrt(tau) from its window mean and never exceeds `tolerance`.

    Raises:
        RegimeNotReachedError: If the distribution never narrows below sigma0/3 or
            no window with tau_hi/tau_lo >= min_ratio stays within `tolerance`.
    """
    tau, var_z, var_abs = _regime_columns(record)
    sigma0 = math.sqrt(var_z[0]) if sigma0 is None else sigma0
    narrow = np.flatnonzero((tau > 0) & (np.sqrt(var_abs) < sigma0 / 3.0))
    if narrow.size < MIN_FIT_POINTS:
        raise RegimeNotReachedError(f"trajectory did not reach regime: width never below sigma0/3={sigma0 / 3.0:.4g}")

    tau = tau[narrow[0]:]
    width = likelihood_width(record.z_grid, record.column('m')[narrow[0]:], tau)
    keep = width > 0
    tau, width = tau[keep], width[keep]
    if tau.size < MIN_FIT_POINTS:
        raise RegimeNotReachedError("trajectory did not reach regime: no positive width after narrowing")
    scaled = width * np.sqrt(tau)
    a, b = _widest_flat_window(tau, scaled, tolerance)
    if b - a + 1 < MIN_FIT_POINTS or tau[b] / tau[a] < min_ratio:
        raise RegimeNotReachedError("trajectory did not reach regime: widest window with width*sqrt(tau) "
                                    f"within {tolerance:.0%} spans tau ratio {tau[b] / tau[a]:.3g} < {min_ratio:g}")

    window = slice(a, b + 1)
    fit = sps.linregress(np.log(tau[window]), np.log(width[window]))
    flat = scaled[window]
    spread = float(np.max(np.abs(flat / flat.mean() - 1.0)))
    result = RegimeFit((float(tau[a]), float(tau[b])), float(fit.slope), float(fit.intercept),
                       float(fit.rvalue) ** 2, b - a + 1, spread)
    logger.debug(f"sqrt regime: {result}")
    return result


def fit_exponential_regime(record: 'TrajectoryRecord', Z: Optional[int] = None) -> RegimeFit:
    """Fit ln(var |z|) against tau where var |z| < Z^2 / 4."""
    tau, _, var_abs = _regime_columns(record)
    Z = record.step if Z is None else Z
    mask = (var_abs < Z * Z / 4.0) & (var_abs > VARIANCE_FLOOR)
    if np.count_nonzero(mask) < MIN_FIT_POINTS:
        raise RegimeNotReachedError(f"trajectory did not reach regime: no samples with var |z| < {Z * Z / 4.0}")
    fit = sps.linregress(tau[mask], np.log(var_abs[mask]))
    result = RegimeFit((float(tau[mask][0]), float(tau[mask][-1])), float(fit.slope), float(fit.intercept),
                       float(fit.rvalue) ** 2, int(np.count_nonzero(mask)))
    logger.debug(f"exponential regime: {result}")
    return result


def fit_regimes(record: 'TrajectoryRecord', Z: Optional[int] = None,
                sigma0: Optional[float] = None) -> Tuple[RegimeFit, RegimeFit]:
    """
    Fit both stages of the collapse.

    Returns:
        (sqrt-regime fit, exponential-regime fit).

    Raises:
        RegimeNotReachedError: If the record never gets below Z^2/10 or a window is empty.
    """
    Z = record.step if Z is None else Z
    final = record.column('var_abs_z')[-1]
    if final >= Z * Z / 10.0:
        raise RegimeNotReachedError(f"trajectory did not reach regime: final var |z| = {final:.4g} >= Z^2/10")
    return fit_sqrt_regime(record, sigma0), fit_exponential_regime(record, Z)


def outcome_chi_square(observed: Sequence[float], expected_p: Sequence[float],
                       min_expected: float = 5.0) -> ChiSquareResult:
    """
    Chi-square test of outcome counts against probabilities.

    Adjacent bins are merged, in grid order, until every expected count reaches min_expected.
    """
    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(expected_p, dtype=float) * observed.sum()

    merged_obs, merged_exp = [], []
    acc_obs = acc_exp = 0.0
    for o, e in zip(observed, expected):
        acc_obs += o
        acc_exp += e
        if acc_exp >= min_expected:
            merged_obs.append(acc_obs)
            merged_exp.append(acc_exp)
            acc_obs = acc_exp = 0.0
    if acc_exp > 0 or acc_obs > 0:
        if merged_exp:
            merged_obs[-1] += acc_obs
            merged_exp[-1] += acc_exp
        else:
            merged_obs.append(acc_obs)
            merged_exp.append(acc_exp)

    if len(merged_exp) < 2:
        return ChiSquareResult(0.0, 0, 1.0)
    merged_exp = np.asarray(merged_exp)
    merged_exp *= sum(merged_obs) / merged_exp.sum()
    statistic, p_value = sps.chisquare(merged_obs, merged_exp)
    return ChiSquareResult(float(statistic), len(merged_exp) - 1, float(p_value))


def martingale_zscores(mean_p: np.ndarray, mean_p_squared: np.ndarray, p0: np.ndarray, n: int) -> np.ndarray:
    """Standard scores (mean_p - p0) / SE of an ensemble average of posteriors."""
    if n < 2:
        raise ConfigError(f"n_traj: need at least 2 trajectories for standard errors, got {n}")
    variance = np.maximum(mean_p_squared - mean_p ** 2, 0.0) * n / (n - 1)
    se = np.sqrt(variance / n)
    diff = mean_p - p0
    with np.errstate(divide='ignore', invalid='ignore'):
        scores = np.where(se > 0, diff / se, np.where(diff == 0, 0.0, np.inf))
    return scores
