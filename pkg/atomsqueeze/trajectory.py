"""Quantum trajectories of the photocount engines and reproducible ensembles of them."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Tuple

import numpy as np

from .base_engine import BaseEngine
from .dynamics import STEADY, CavityParams
from .errors import ConfigError, ConsistencyError
from .full_engine import FullEngine
from .lattice import DEFAULT_BASIS_CAP, InitialDistribution, LatticeConfig, ModeProfile
from .reduced_engine import ReducedEngine
from .stats import DistributionSnapshot, fold, martingale_zscores, moments, peak

logger = logging.getLogger(__name__)

WAITING_TIME = 'waiting-time'
FIXED_STEP = 'fixed-step'
JUMP_SAMPLING = (WAITING_TIME, FIXED_STEP)

UNCONDITIONAL = 'unconditional'
NO_JUMP = 'no-jump'
CONDITIONS = (UNCONDITIONAL, NO_JUMP)

# Largest jump probability per step in fixed-step mode
FIXED_STEP_PROBABILITY = 0.01
ENSEMBLE_CHUNK = 64

SAMPLE_FIELDS = ('tau', 'm', 'mean_z', 'mean_abs_z', 'var_z', 'var_abs_z', 'width_abs', 'is_jump_interval')


@dataclass(frozen=True)
class Sample:
    """Moments of the distribution at one checkpoint."""

    tau: float
    m: int
    mean_z: float
    mean_abs_z: float
    var_z: float
    var_abs_z: float
    is_jump_interval: bool = False

    @property
    def width_abs(self) -> float:
        return self.var_abs_z ** 0.5


@dataclass
class TrajectoryRecord:
    samples: List[Sample]
    jumps: List[float]
    seed: int
    step: int
    final: DistributionSnapshot
    condition: str = UNCONDITIONAL
    distributions: Optional[List[DistributionSnapshot]] = None

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.jumps, self.jumps[1:])):
            raise ConsistencyError("jump times must be strictly increasing")

    def column(self, name: str) -> np.ndarray:
        if name not in SAMPLE_FIELDS:
            raise KeyError(f"unknown sample column {name!r}")
        return np.array([getattr(s, name) for s in self.samples], dtype=float)

    @property
    def tau(self) -> np.ndarray:
        return self.column('tau')

    @property
    def z_grid(self) -> np.ndarray:
        return self.final.z_grid

    def count_at(self, tau: float) -> int:
        """Number of jumps at or before tau."""
        return int(np.searchsorted(np.asarray(self.jumps), tau, side='right'))


def derive_seed(base_seed: int, index: int) -> int:
    """Independent 64-bit seed for trajectory `index` of an ensemble."""
    sequence = np.random.SeedSequence(base_seed, spawn_key=(index,))
    return int(sequence.generate_state(1, np.uint64)[0])


def checkpoints(tau_max: float, record_interval: float) -> List[Fraction]:
    """Exact checkpoints 0, dt, 2 dt, ... below tau_max, then tau_max itself."""
    if tau_max < 0:
        raise ConfigError(f"tau_max: expected tau_max >= 0, got {tau_max!r}")
    if not record_interval > 0:
        raise ConfigError(f"record_interval: expected a positive interval, got {record_interval!r}")
    end = Fraction(tau_max)
    interval = Fraction(record_interval)
    points = [Fraction(0)]
    k = 1
    while k * interval < end:
        points.append(k * interval)
        k += 1
    if end > 0:
        points.append(end)
    return points


def _sample(engine: BaseEngine, jumped: bool) -> Tuple[Sample, DistributionSnapshot]:
    snapshot = engine.snapshot()
    mo = moments(snapshot)
    sample = Sample(float(engine.tau), engine.count, mo.mean_z, mo.mean_abs_z, mo.var_z, mo.var_abs_z, jumped)
    return sample, snapshot


def _advance_to(engine: BaseEngine, target: Fraction) -> None:
    if target > engine.tau:
        engine.advance(target - engine.tau)


def _run_waiting_time(engine: BaseEngine, points: List[Fraction], rng: np.random.Generator,
                      jumps: List[float], record) -> None:
    wait = engine.sample_next_jump(rng)
    jump_at = None if wait is None else engine.tau + Fraction(wait)
    for target in points[1:]:
        jumped = False
        while jump_at is not None and jump_at <= target:
            _advance_to(engine, jump_at)
            engine.apply_count()
            jumps.append(float(engine.tau))
            jumped = True
            wait = engine.sample_next_jump(rng)
            jump_at = None if wait is None else engine.tau + Fraction(wait)
        _advance_to(engine, target)
        record(jumped)


def _run_fixed_step(engine: BaseEngine, points: List[Fraction], rng: np.random.Generator,
                    jumps: List[float], record) -> None:
    for target in points[1:]:
        jumped = False
        while engine.tau < target:
            rate = engine.detection_rate()
            dtau = target - engine.tau
            if rate > 0:
                dtau = min(dtau, Fraction(FIXED_STEP_PROBABILITY / rate))
            probability = rate * float(dtau)
            r = float(rng.random())
            engine.advance(dtau)
            if r < probability:
                engine.apply_count()
                jumps.append(float(engine.tau))
                jumped = True
        record(jumped)


def run_engine(engine: BaseEngine, tau_max: float, record_interval: float, seed: int, *,
               jump_sampling: str = WAITING_TIME, condition: str = UNCONDITIONAL,
               keep_distributions: bool = False) -> TrajectoryRecord:
    """
    Drive an engine from tau = 0 to tau_max, recording moments every record_interval.

    Args:
        engine: Fresh engine at tau = 0.
        tau_max: Final scaled time (0 gives a single sample).
        record_interval: Scaled time between samples.
        seed: Seed of the uniform draws; one draw per jump in waiting-time mode.
        jump_sampling: 'waiting-time' (exact) or 'fixed-step' (first-order cross-check).
        condition: 'unconditional', or 'no-jump' to condition on zero counts.
        keep_distributions: Keep the full distribution at every checkpoint.

    Returns:
        The TrajectoryRecord.
    """
    if jump_sampling not in JUMP_SAMPLING:
        raise ConfigError(f"jump_sampling: expected one of {JUMP_SAMPLING}, got {jump_sampling!r}")
    if condition not in CONDITIONS:
        raise ConfigError(f"condition: expected one of {CONDITIONS}, got {condition!r}")
    points = checkpoints(tau_max, record_interval)
    rng = np.random.default_rng(seed)
    samples: List[Sample] = []
    snapshots: List[DistributionSnapshot] = []
    jumps: List[float] = []

    def record(jumped: bool) -> None:
        sample, snapshot = _sample(engine, jumped)
        samples.append(sample)
        if not keep_distributions:
            snapshots.clear()
        snapshots.append(snapshot)

    record(False)
    if condition == NO_JUMP:
        for target in points[1:]:
            _advance_to(engine, target)
            record(False)
    elif jump_sampling == WAITING_TIME:
        _run_waiting_time(engine, points, rng, jumps, record)
    else:
        _run_fixed_step(engine, points, rng, jumps, record)

    logger.debug(f"{engine.name} trajectory seed={seed}: {len(jumps)} jumps up to tau={tau_max}")
    return TrajectoryRecord(samples, jumps, seed, engine.step, snapshots[-1], condition,
                            snapshots if keep_distributions else None)


def run_trajectory(init: InitialDistribution, tau_max: float, record_interval: float, seed: int, *,
                   jump_sampling: str = WAITING_TIME, condition: str = UNCONDITIONAL,
                   keep_distributions: bool = False) -> TrajectoryRecord:
    """Run one trajectory of the reduced engine from the prior `init`."""
    return run_engine(ReducedEngine(init), tau_max, record_interval, seed, jump_sampling=jump_sampling,
                      condition=condition, keep_distributions=keep_distributions)


def run_full_oracle(cfg: LatticeConfig, modes: ModeProfile, params: CavityParams, seed: int,
                    tau_max: float, record_interval: float, *, initial: str = 'superfluid',
                    regime: str = STEADY, cap: int = DEFAULT_BASIS_CAP,
                    keep_distributions: bool = True) -> TrajectoryRecord:
    """
    Run one trajectory of the configuration-space engine.

    Times are in scaled units; physical time is tau / (2 kappa |C_eff|^2).
    """
    engine = FullEngine(cfg, modes, params, initial=initial, regime=regime, cap=cap)
    return run_engine(engine, tau_max, record_interval, seed, keep_distributions=keep_distributions)


def oracle_deviation(reduced: TrajectoryRecord, full: TrajectoryRecord) -> np.ndarray:
    """Max-abs difference of the z-marginals at each shared checkpoint."""
    if reduced.distributions is None or full.distributions is None:
        raise ConfigError("oracle comparison needs records with kept distributions")
    if len(reduced.distributions) != len(full.distributions):
        raise ConsistencyError("records have different checkpoints")
    deviations = []
    for a, b in zip(reduced.distributions, full.distributions):
        if not np.array_equal(a.z_grid, b.z_grid):
            raise ConsistencyError("reduced and full engines use different z grids")
        deviations.append(float(np.max(np.abs(a.p - b.p))))
    return np.array(deviations)


@dataclass
class EnsembleSummary:
    """Index-ordered sums over an ensemble of trajectories."""

    tau: np.ndarray
    z_grid: np.ndarray
    step: int
    n_traj: int
    sum_p: np.ndarray
    sum_p_squared: np.ndarray
    sum_var_z: np.ndarray
    sum_var_abs_z: np.ndarray
    outcomes: List[int] = field(default_factory=list)
    jump_counts: List[int] = field(default_factory=list)
    seeds: List[int] = field(default_factory=list)

    @property
    def mean_p(self) -> np.ndarray:
        return self.sum_p / self.n_traj

    @property
    def mean_p_squared(self) -> np.ndarray:
        return self.sum_p_squared / self.n_traj

    @property
    def mean_var_z(self) -> np.ndarray:
        return self.sum_var_z / self.n_traj

    @property
    def mean_var_abs_z(self) -> np.ndarray:
        return self.sum_var_abs_z / self.n_traj

    def outcome_histogram(self) -> Tuple[np.ndarray, np.ndarray]:
        """Counts of collapsed |z0| over the non-negative grid of |z|."""
        grid = np.unique(np.abs(self.z_grid))
        counts = np.array([self.outcomes.count(int(a)) for a in grid])
        return grid, counts

    def martingale_zscores(self, p0: np.ndarray, checkpoint: int = -1) -> np.ndarray:
        return martingale_zscores(self.mean_p[checkpoint], self.mean_p_squared[checkpoint], p0, self.n_traj)


def _run_chunk(args) -> EnsembleSummary:
    init, tau_max, record_interval, base_seed, indices, jump_sampling = args
    summary = None
    for i in indices:
        seed = derive_seed(base_seed, i)
        record = run_trajectory(init, tau_max, record_interval, seed, jump_sampling=jump_sampling,
                                keep_distributions=True)
        p = np.array([d.p for d in record.distributions])
        var_z = record.column('var_z')
        var_abs = record.column('var_abs_z')
        if summary is None:
            summary = EnsembleSummary(record.tau, init.z_grid, init.step, 0, np.zeros_like(p), np.zeros_like(p),
                                      np.zeros_like(var_z), np.zeros_like(var_abs))
        summary.n_traj += 1
        summary.sum_p += p
        summary.sum_p_squared += p * p
        summary.sum_var_z += var_z
        summary.sum_var_abs_z += var_abs
        summary.outcomes.append(peak(fold(record.final)))
        summary.jump_counts.append(len(record.jumps))
        summary.seeds.append(seed)
    return summary


def _merge(total: Optional[EnsembleSummary], part: EnsembleSummary) -> EnsembleSummary:
    if total is None:
        return part
    total.n_traj += part.n_traj
    total.sum_p += part.sum_p
    total.sum_p_squared += part.sum_p_squared
    total.sum_var_z += part.sum_var_z
    total.sum_var_abs_z += part.sum_var_abs_z
    total.outcomes.extend(part.outcomes)
    total.jump_counts.extend(part.jump_counts)
    total.seeds.extend(part.seeds)
    return total


def run_ensemble(init: InitialDistribution, tau_max: float, record_interval: float, n_traj: int,
                 base_seed: int, workers: int = 1, jump_sampling: str = WAITING_TIME) -> EnsembleSummary:
    """
    Run n_traj independent trajectories.

    Trajectory i is seeded with derive_seed(base_seed, i). Work is split into fixed-size
    chunks whose sums are merged in index order, so the result does not depend on `workers`.
    """
    if n_traj < 1:
        raise ConfigError(f"n_traj: expected at least 1 trajectory, got {n_traj!r}")
    if workers < 1:
        raise ConfigError(f"workers: expected at least 1, got {workers!r}")
    tasks = [(init, tau_max, record_interval, base_seed, range(a, min(a + ENSEMBLE_CHUNK, n_traj)), jump_sampling)
             for a in range(0, n_traj, ENSEMBLE_CHUNK)]

    total = None
    if workers == 1:
        for task in tasks:
            total = _merge(total, _run_chunk(task))
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            for part in executor.map(_run_chunk, tasks):
                total = _merge(total, part)

    logger.debug(f"Ensemble of {n_traj} trajectories done, mean jumps {np.mean(total.jump_counts):.1f}")
    return total
