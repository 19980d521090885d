"""Lattice geometry, light-mode profiles, Fock configurations and initial atom-number statistics."""

import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gammaln
from scipy.stats import binom, poisson

from .errors import BasisTooLargeError, ConfigError, ConsistencyError

logger = logging.getLogger(__name__)

DEFAULT_BASIS_CAP = 10**6
NORMALIZATION_TOLERANCE = 1e-12

MAXIMUM = 'maximum'
MINIMUM = 'minimum'
CUSTOM = 'custom'
GEOMETRIES = (MAXIMUM, MINIMUM)

# Grid step Z of the measured variable for each geometry
GEOMETRY_STEP = {MAXIMUM: 1, MINIMUM: 2}


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class LatticeConfig:
    """N atoms on M sites, of which the first K are illuminated."""

    M: int
    K: int
    N: int

    def __post_init__(self):
        for name in ('M', 'K', 'N'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name}: expected a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.K > self.M:
            raise ConfigError(f"K: must satisfy 1 <= K <= M={self.M}, got {self.K}")

    @property
    def basis_size(self) -> int:
        """Number of Fock configurations, C(N+M-1, M-1)."""
        return math.comb(self.N + self.M - 1, self.M - 1)


@dataclass(frozen=True, eq=False)
class ModeProfile:
    """Probe (u0) and cavity (u1) mode functions sampled at the lattice sites."""

    u0: np.ndarray
    u1: np.ndarray
    preset: str = CUSTOM

    def __post_init__(self):
        u0 = np.array(self.u0, dtype=complex)
        u1 = np.array(self.u1, dtype=complex)
        if u0.ndim != 1 or u0.shape != u1.shape or u0.size == 0:
            raise ConfigError(f"mode profiles must be equal-length vectors, got shapes {u0.shape} and {u1.shape}")
        if self.preset not in (MAXIMUM, MINIMUM, CUSTOM):
            raise ConfigError(f"preset: unknown mode preset {self.preset!r}")
        object.__setattr__(self, 'u0', _frozen(u0))
        object.__setattr__(self, 'u1', _frozen(u1))

    @classmethod
    def diffraction_maximum(cls, cfg: LatticeConfig) -> 'ModeProfile':
        """All illuminated sites scatter in phase: u0*(r_j) u1(r_j) = 1."""
        ones = np.ones(cfg.M)
        return cls(ones, ones, MAXIMUM)

    @classmethod
    def diffraction_minimum(cls, cfg: LatticeConfig) -> 'ModeProfile':
        """Neighbouring sites scatter in antiphase: u0*(r_j) u1(r_j) = (-1)^(j+1), j = 1..M."""
        if cfg.K != cfg.M:
            raise ConfigError(f"K: diffraction minimum requires K = M = {cfg.M}, got {cfg.K}")
        signs = np.where(np.arange(cfg.M) % 2 == 0, 1.0, -1.0)
        return cls(np.ones(cfg.M), signs, MINIMUM)

    @classmethod
    def for_geometry(cls, geometry: str, cfg: LatticeConfig) -> 'ModeProfile':
        if geometry == MAXIMUM:
            return cls.diffraction_maximum(cfg)
        if geometry == MINIMUM:
            return cls.diffraction_minimum(cfg)
        raise ConfigError(f"geometry: expected one of {GEOMETRIES}, got {geometry!r}")

    @property
    def M(self) -> int:
        return self.u0.size

    @property
    def step(self) -> Optional[int]:
        return GEOMETRY_STEP.get(self.preset)

    def mode(self, index: int) -> np.ndarray:
        if index == 0:
            return self.u0
        if index == 1:
            return self.u1
        raise ConfigError(f"mode index must be 0 or 1, got {index!r}")

    def prefactors(self, l: int, m: int, K: int) -> np.ndarray:
        """Return u_l*(r_j) u_m(r_j) for the K illuminated sites."""
        if not 1 <= K <= self.M:
            raise ConfigError(f"K: must satisfy 1 <= K <= M={self.M}, got {K}")
        return np.conj(self.mode(l)[:K]) * self.mode(m)[:K]


@dataclass(frozen=True)
class FockConfiguration:
    """Occupation numbers q_1..q_M of one classical atom configuration."""

    q: Tuple[int, ...]

    def __post_init__(self):
        occupations = tuple(int(n) for n in self.q)
        if any(n < 0 for n in occupations):
            raise ConfigError(f"occupations must be non-negative, got {occupations}")
        object.__setattr__(self, 'q', occupations)

    @property
    def N(self) -> int:
        return sum(self.q)

    @property
    def M(self) -> int:
        return len(self.q)

    def illuminated(self, K: int) -> int:
        """Atom number N_K at the first K sites."""
        return sum(self.q[:K])


@dataclass(frozen=True, eq=False)
class InitialDistribution:
    """Normalized prior p0(z) on an integer grid with uniform step Z."""

    z_grid: np.ndarray
    p0: np.ndarray
    step: int

    def __post_init__(self):
        z = np.asarray(self.z_grid, dtype=float)
        p = np.asarray(self.p0, dtype=float)
        if z.ndim != 1 or z.shape != p.shape or z.size == 0:
            raise ConfigError(f"distribution grid and probabilities must be equal-length vectors, "
                              f"got shapes {z.shape} and {p.shape}")
        if not np.all(np.isfinite(z)) or np.any(z != np.round(z)):
            raise ConfigError("distribution grid must contain integers only")
        if self.step not in (1, 2):
            raise ConfigError(f"step: expected 1 or 2 atoms, got {self.step!r}")
        if z.size > 1 and np.any(np.diff(z) != self.step):
            raise ConfigError(f"distribution grid must be ordered with constant step {self.step}")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ConfigError("probabilities must be finite and non-negative")
        total = math.fsum(p)
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            raise ConfigError(f"probabilities must sum to 1 within {NORMALIZATION_TOLERANCE}, got {total!r}")
        object.__setattr__(self, 'z_grid', _frozen(z.astype(np.int64)))
        object.__setattr__(self, 'p0', _frozen(p))

    def __len__(self) -> int:
        return self.z_grid.size

    @property
    def log_p0(self) -> np.ndarray:
        with np.errstate(divide='ignore'):
            return np.log(self.p0)

    def probability(self, z: int) -> float:
        matches = np.flatnonzero(self.z_grid == z)
        return float(self.p0[matches[0]]) if matches.size else 0.0


def _compositions(n: int, parts: int) -> Iterator[Tuple[int, ...]]:
    # Stars and bars: bar positions in lexicographic order give occupations in lexicographic order
    slots = n + parts - 1
    for bars in itertools.combinations(range(slots), parts - 1):
        edges = (-1,) + bars + (slots,)
        yield tuple(edges[i + 1] - edges[i] - 1 for i in range(parts))


def enumerate_configurations(cfg: LatticeConfig, cap: int = DEFAULT_BASIS_CAP) -> List[FockConfiguration]:
    """
    List every distribution of N atoms over M sites exactly once.

    Args:
        cfg: Lattice size and atom number.
        cap: Largest basis the full engine accepts.

    Returns:
        Fock configurations in lexicographic order of (q_1, ..., q_M).

    Raises:
        BasisTooLargeError: If C(N+M-1, M-1) exceeds the cap.
    """
    size = cfg.basis_size
    if size > cap:
        raise BasisTooLargeError(
            f"basis too large for full engine: C({cfg.N + cfg.M - 1}, {cfg.M - 1}) = {size} exceeds cap {cap}"
        )
    logger.debug(f"Enumerating {size} configurations of N={cfg.N} atoms on M={cfg.M} sites")
    return [FockConfiguration(q) for q in _compositions(cfg.N, cfg.M)]


def occupation_matrix(configurations: Sequence[FockConfiguration]) -> np.ndarray:
    """Stack configurations into an (n_configurations, M) integer array."""
    return np.array([c.q for c in configurations], dtype=np.int64)


def coupling_coefficient(q: FockConfiguration, modes: ModeProfile, l: int, m: int, K: int) -> complex:
    """
    Compute D^q_lm = sum_{j<=K} u_l*(r_j) u_m(r_j) q_j.

    Args:
        q: Atom configuration.
        modes: Mode functions sampled at the sites.
        l, m: Mode indices, each 0 (probe) or 1 (cavity).
        K: Number of illuminated sites.

    Returns:
        The (generally complex) coupling coefficient.
    """
    if q.M != modes.M:
        raise ConfigError(f"configuration has {q.M} sites but mode profile has {modes.M}")
    return complex(np.dot(modes.prefactors(l, m, K), np.asarray(q.q[:K], dtype=float)))


def coupling_coefficients(occupations: np.ndarray, modes: ModeProfile, l: int, m: int, K: int) -> np.ndarray:
    """Vectorized coupling_coefficient over the rows of an occupation matrix."""
    occupations = np.atleast_2d(occupations)
    if occupations.shape[1] != modes.M:
        raise ConfigError(f"configurations have {occupations.shape[1]} sites but mode profile has {modes.M}")
    return occupations[:, :K].astype(float) @ modes.prefactors(l, m, K)


def geometry_grid(cfg: LatticeConfig, geometry: str) -> np.ndarray:
    """Possible values of the measured variable: N_K for the maximum, N_odd - N_even for the minimum."""
    if geometry == MAXIMUM:
        return np.arange(0, cfg.N + 1)
    if geometry == MINIMUM:
        if cfg.K != cfg.M:
            raise ConfigError(f"K: diffraction minimum requires K = M = {cfg.M}, got {cfg.K}")
        return np.arange(-cfg.N, cfg.N + 1, 2)
    raise ConfigError(f"geometry: expected one of {GEOMETRIES}, got {geometry!r}")


def _from_unnormalized(z_grid: np.ndarray, weights: np.ndarray, step: int) -> InitialDistribution:
    weights = np.asarray(weights, dtype=float)
    return InitialDistribution(z_grid, weights / math.fsum(weights), step)


def initial_distribution(preset: str, cfg: LatticeConfig, *, geometry: str = MAXIMUM,
                         z_star: Optional[int] = None,
                         z_grid: Optional[Sequence[int]] = None,
                         p0: Optional[Sequence[float]] = None) -> InitialDistribution:
    """
    Build the prior distribution of the measured atom-number variable.

    Args:
        preset: 'superfluid-max', 'superfluid-min', 'delta', 'mott' or 'custom'.
        cfg: Lattice size and atom number.
        geometry: Grid used by 'delta' and 'mott'.
        z_star: Location of the unit mass for 'delta'.
        z_grid, p0: Explicit grid and probabilities for 'custom'.

    Returns:
        The validated InitialDistribution.
    """
    if preset == 'superfluid-max':
        k = np.arange(cfg.N + 1)
        return _from_unnormalized(k, binom.pmf(k, cfg.N, cfg.K / cfg.M), 1)

    if preset == 'superfluid-min':
        if cfg.K != cfg.M:
            raise ConfigError(f"K: superfluid-min requires K = M = {cfg.M}, got {cfg.K}")
        k = np.arange(cfg.N + 1)
        return _from_unnormalized(2 * k - cfg.N, binom.pmf(k, cfg.N, 0.5), 2)

    if preset == 'delta':
        grid = geometry_grid(cfg, geometry)
        if z_star is None or int(z_star) not in grid:
            raise ConfigError(f"delta: z*={z_star!r} is not on the {geometry} grid "
                              f"[{grid[0]}, {grid[-1]}] step {GEOMETRY_STEP[geometry]}")
        return _from_unnormalized(grid, (grid == int(z_star)).astype(float), GEOMETRY_STEP[geometry])

    if preset == 'mott':
        if cfg.N % cfg.M:
            raise ConfigError(f"mott state requires M | N, got N={cfg.N}, M={cfg.M}")
        uniform = FockConfiguration((cfg.N // cfg.M,) * cfg.M)
        z = coupling_coefficient(uniform, ModeProfile.for_geometry(geometry, cfg), 1, 0, cfg.K)
        return initial_distribution('delta', cfg, geometry=geometry, z_star=int(round(z.real)))

    if preset == 'custom':
        if z_grid is None or p0 is None:
            raise ConfigError("custom distribution needs both z_grid and p0")
        grid = np.asarray(z_grid)
        step = int(grid[1] - grid[0]) if grid.size > 1 else GEOMETRY_STEP.get(geometry, 1)
        return InitialDistribution(grid, np.asarray(p0, dtype=float), step)

    raise ConfigError(f"initial: unknown distribution preset {preset!r}")


def initial_amplitudes(preset: str, cfg: LatticeConfig,
                       configurations: Optional[Sequence[FockConfiguration]] = None) -> np.ndarray:
    """
    Compute the Fock-state amplitudes c_q^0 of the initial motional state.

    Args:
        preset: 'superfluid' (fixed-N multinomial) or 'mott' (uniform filling).
        cfg: Lattice size and atom number.
        configurations: Basis to use; enumerated from cfg when omitted.

    Returns:
        Complex amplitudes aligned with the basis.
    """
    if configurations is None:
        configurations = enumerate_configurations(cfg)
    occupations = occupation_matrix(configurations)

    if preset == 'superfluid':
        log_c = 0.5 * (gammaln(cfg.N + 1) - gammaln(occupations + 1).sum(axis=1) - cfg.N * math.log(cfg.M))
        amplitudes = np.exp(log_c).astype(complex)
    elif preset == 'mott':
        if cfg.N % cfg.M:
            raise ConfigError(f"mott state requires M | N, got N={cfg.N}, M={cfg.M}")
        amplitudes = np.all(occupations == cfg.N // cfg.M, axis=1).astype(complex)
    else:
        raise ConfigError(f"initial: unknown amplitude preset {preset!r}")

    norm = math.fsum(np.abs(amplitudes) ** 2)
    if abs(norm - 1.0) > NORMALIZATION_TOLERANCE:
        raise ConsistencyError(f"initial amplitudes have norm {norm!r}")
    return amplitudes


def marginal_distribution(configurations: Sequence[FockConfiguration], amplitudes: np.ndarray,
                          modes: ModeProfile, cfg: LatticeConfig) -> InitialDistribution:
    """Group |c_q|^2 by the measured variable z = D^q_10 on the geometry grid of the mode preset."""
    if modes.step is None:
        raise ConfigError("marginal over z requires a diffraction maximum or minimum mode preset")
    grid = geometry_grid(cfg, modes.preset)
    z = coupling_coefficients(occupation_matrix(configurations), modes, 1, 0, cfg.K).real
    index = np.round((z - grid[0]) / modes.step).astype(np.int64)
    weights = np.bincount(index, weights=np.abs(amplitudes) ** 2, minlength=grid.size)
    return _from_unnormalized(grid, weights, modes.step)


def poisson_distribution(mean: float, tail: float = 1e-12) -> InitialDistribution:
    """Poissonian N_K statistics truncated where the remaining tail mass drops below `tail`."""
    if mean < 0:
        raise ConfigError(f"mean_nk: expected a non-negative mean, got {mean!r}")
    if mean == 0:
        return InitialDistribution(np.array([0]), np.array([1.0]), 1)
    n_max = int(poisson.isf(tail, mean)) + 1
    n = np.arange(n_max + 1)
    logger.debug(f"Poisson prior with mean {mean} truncated at N_K={n_max}")
    return _from_unnormalized(n, poisson.pmf(n, mean), 1)


def load_distribution(path: Union[str, Path]) -> InitialDistribution:
    """
    Read a two-column (z, p0) text file; '#' starts a comment.

    Raises:
        ConfigError: If the file is malformed or fails the distribution invariants.
        OSError: If the file cannot be read.
    """
    path = Path(path)
    try:
        data = np.loadtxt(path, comments='#', ndmin=2)
    except ValueError as e:
        raise ConfigError(f"{path}: could not parse two-column distribution: {e}")
    if data.shape[1] != 2:
        raise ConfigError(f"{path}: expected 2 columns (z, p0), got {data.shape[1]}")
    z, p = data[:, 0], data[:, 1]
    step = int(z[1] - z[0]) if z.size > 1 else 1
    try:
        return InitialDistribution(z, p, step)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}")


def save_distribution(distribution: InitialDistribution, path: Union[str, Path]) -> None:
    """Write a distribution in the format read by load_distribution."""
    lines = ["# z p0"]
    lines += [f"{int(z)} {float(p)!r}" for z, p in zip(distribution.z_grid, distribution.p0)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
