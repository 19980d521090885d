"""Command line interface for the photodetection collapse simulator."""

import functools
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Optional

import click
import numpy as np

from . import output
from .config import FULL, RunConfig, describe, load_config
from .dynamics import coherence_proxy, revival_time, unitary_phase
from .errors import AtomSqueezeError, ConfigError, ConsistencyError, RegimeNotReachedError
from .full_engine import FullEngine
from .lattice import marginal_distribution, poisson_distribution
from .stats import DistributionSnapshot, fit_regimes, fold, outcome_chi_square
from .trajectory import (NO_JUMP, oracle_deviation, run_engine, run_ensemble, run_full_oracle,
                         run_trajectory)

logging.basicConfig(
    level=logging.INFO,
    format='%(levelname)s: %(message)s'
)
logger = logging.getLogger(__name__)

ORACLE_THRESHOLD = 1e-8


class ConfigExit(click.ClickException):
    exit_code = 1


class ConsistencyExit(click.ClickException):
    exit_code = 2


class IOExit(click.ClickException):
    exit_code = 3


@contextmanager
def exit_codes():
    """Translate library errors into exit statuses 1 (config), 2 (numerics) and 3 (I/O)."""
    try:
        yield
    except ConfigError as e:
        raise ConfigExit(str(e))
    except AtomSqueezeError as e:
        raise ConsistencyExit(str(e))
    except OSError as e:
        raise IOExit(str(e))


def run_options(f):
    """Options shared by every subcommand."""
    @click.option('--config', '-c', 'config_path', type=click.Path(dir_okay=False), default=None,
                  help='INI file with [run], [physical] and [unitary] sections.')
    @click.option('--seed', type=click.IntRange(0, 2**64 - 1), default=None,
                  help='Seed overriding run.seed.')
    @click.option('--out', 'output_dir', type=click.Path(file_okay=False), default=None,
                  help='Output directory overriding run.output_dir.')
    @click.option('--workers', type=click.IntRange(min=1), default=1,
                  help='Worker processes for ensembles.')
    @click.option('--debug', '-d', is_flag=True, help='Enable debug logging.')
    @functools.wraps(f)
    def wrapper(config_path, seed, output_dir, workers, debug, **kwargs):
        if debug:
            logging.getLogger().setLevel(logging.DEBUG)
            logger.debug("Debug logging enabled")
        with exit_codes():
            cfg = load_config(config_path) if config_path else RunConfig()
            cfg = cfg.with_overrides(seed=seed, output_dir=output_dir)
            logger.debug(f"Run settings: {describe(cfg)}")
            return f(cfg, workers=workers, **kwargs)
    return wrapper


def _output_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _full_engine(cfg: RunConfig) -> FullEngine:
    if cfg.physical is None:
        raise ConfigError("physical: the full engine needs a [physical] section")
    return FullEngine(cfg.lattice(), cfg.modes(), cfg.physical, initial=cfg.amplitude_preset, regime=cfg.regime)


@click.group()
def cli():
    """
    Simulate photodetection-induced collapse of atom-number distributions.

    Examples:
        atomsqueeze trajectory -c configs/collapse_minimum.ini     # Single trajectory
        atomsqueeze ensemble -c configs/ensemble_n10.ini --workers 4
        atomsqueeze oracle-compare -c configs/oracle_minimum.ini
        atomsqueeze unitary -c configs/unitary.ini            # Collapse and revival
    """


@cli.command()
@run_options
def trajectory(cfg: RunConfig, workers: int):
    """Run one trajectory and its no-jump counterpart."""
    if cfg.n_traj > 1:
        raise ConfigError(f"run.n_traj: trajectory runs one trajectory, got n_traj={cfg.n_traj}; "
                          "use the ensemble command")
    out = _output_dir(cfg)

    if cfg.engine == FULL:
        engine = _full_engine(cfg)
        tau_rate = engine.tau_rate
        record = run_engine(engine, cfg.tau_max, cfg.record_interval, cfg.seed, jump_sampling=cfg.jump_sampling)
        no_jump = run_engine(_full_engine(cfg), cfg.tau_max, cfg.record_interval, cfg.seed, condition=NO_JUMP)
    else:
        init = cfg.initial_distribution()
        tau_rate = cfg.physical.tau_rate if cfg.physical is not None else None
        record = run_trajectory(init, cfg.tau_max, cfg.record_interval, cfg.seed, jump_sampling=cfg.jump_sampling)
        no_jump = run_trajectory(init, cfg.tau_max, cfg.record_interval, cfg.seed, condition=NO_JUMP)
    if tau_rate == 0:
        raise ConfigError("physical: 2|C|^2 kappa = 0, no physical time axis")

    output.write_trajectory_csv(record, out / 'trajectory.csv', tau_rate)
    output.write_trajectory_csv(no_jump, out / 'trajectory_nojump.csv', tau_rate)
    output.write_events_csv(record, out / 'events.csv', tau_rate)
    output.write_plot_script(out / 'width.gp', [('trajectory.csv', 'with jumps'),
                                                ('trajectory_nojump.csv', 'no jumps')])

    final = record.samples[-1]
    logger.info(f"{len(record.jumps)} jumps up to tau={final.tau}; "
                f"final <|z|>={final.mean_abs_z:.6g}, var |z|={final.var_abs_z:.3g}")
    for name, rec in (('jump', record), ('no-jump', no_jump)):
        try:
            sqrt_fit, exp_fit = fit_regimes(rec)
            logger.info(f"{name} trajectory: sqrt regime slope {sqrt_fit.slope:.4f} "
                        f"(spread {sqrt_fit.spread:.3f}), exponential regime slope {exp_fit.slope:.4f} "
                        f"(R^2 {exp_fit.r_squared:.4f})")
        except RegimeNotReachedError as e:
            logger.info(f"{name} trajectory: {e}")
    click.echo(f"Wrote trajectory.csv, trajectory_nojump.csv, events.csv and width.gp to {out}")


@cli.command()
@run_options
def ensemble(cfg: RunConfig, workers: int):
    """Run n_traj trajectories and test their outcome statistics."""
    if cfg.n_traj < 2:
        raise ConfigError(f"run.n_traj: ensemble needs n_traj >= 2, got {cfg.n_traj}")
    if cfg.engine == FULL:
        raise ConfigError("run.engine: ensembles run on the reduced engine")
    out = _output_dir(cfg)
    init = cfg.initial_distribution()

    summary = run_ensemble(init, cfg.tau_max, cfg.record_interval, cfg.n_traj, cfg.seed,
                           workers=workers, jump_sampling=cfg.jump_sampling)
    abs_z, counts = summary.outcome_histogram()
    expected = fold(DistributionSnapshot.from_initial(init)).p
    result = outcome_chi_square(counts, expected)
    zscores = summary.martingale_zscores(init.p0)

    output.write_ensemble_csv(summary, out / 'ensemble.csv')
    output.write_outcomes_csv(abs_z, counts, expected, out / 'outcomes.csv')
    output.write_outcome_test_csv(result, out / 'outcome_test.csv')

    logger.info(f"{summary.n_traj} trajectories; max |martingale z-score| at tau={summary.tau[-1]}: "
                f"{np.max(np.abs(zscores)):.3f}")
    logger.info(f"Outcome chi-square {result.statistic:.3f} with {result.dof} dof, p-value {result.p_value:.4f}")
    click.echo(f"Wrote ensemble.csv, outcomes.csv and outcome_test.csv to {out}")


@cli.command('oracle-compare')
@run_options
def oracle_compare(cfg: RunConfig, workers: int):
    """Compare the reduced engine with the configuration-space engine."""
    out = _output_dir(cfg)
    engine = _full_engine(cfg)
    init = marginal_distribution(engine.configurations, engine.amplitudes, engine.modes, engine.cfg)

    full = run_full_oracle(cfg.lattice(), cfg.modes(), cfg.physical, cfg.seed, cfg.tau_max, cfg.record_interval,
                           initial=cfg.amplitude_preset, regime=cfg.regime)
    reduced = run_trajectory(init, cfg.tau_max, cfg.record_interval, cfg.seed, keep_distributions=True)
    deviations = oracle_deviation(reduced, full)
    output.write_oracle_report(reduced.tau, deviations, out / 'oracle_report.csv')

    worst = float(np.max(deviations))
    logger.info(f"Reduced vs full engine: {len(reduced.jumps)} vs {len(full.jumps)} jumps, "
                f"max deviation {worst:.3e}")
    if worst > ORACLE_THRESHOLD:
        raise ConsistencyError(f"oracle deviation {worst:.3e} exceeds {ORACLE_THRESHOLD:g}")
    click.echo(f"Wrote oracle_report.csv to {out}")


@cli.command()
@run_options
def unitary(cfg: RunConfig, workers: int):
    """Collapse and revival of a Poissonian superposition in a lossless cavity."""
    if cfg.unitary is None:
        raise ConfigError("unitary: the unitary command needs a [unitary] section")
    out = _output_dir(cfg)
    sweep = cfg.unitary
    params = sweep.params
    dist = poisson_distribution(sweep.mean_nk, sweep.truncation)
    t_rev = revival_time(params)

    t = np.linspace(0.0, 2.0 * t_rev, sweep.n_points)
    q = coherence_proxy(dist, params, t)
    n = dist.z_grid.astype(float)
    strength = np.abs(params.unitary_C * n) ** 2
    phase_rate = -params.delta_p * strength
    phase_at_t_rev = np.imag(unitary_phase(params, n, t_rev))

    output.write_coherence_csv(t, t_rev, q, out / 'coherence.csv')
    output.write_phases_csv(dist.z_grid, dist.p0, phase_rate, phase_at_t_rev, out / 'phases.csv')

    between = (t > 0.1 * t_rev) & (t < 0.9 * t_rev)
    if np.any(between):
        logger.info(f"t_rev={t_rev:.6g}; minimum Q between revivals {np.min(q[between]):.3e}")
    click.echo(f"Wrote coherence.csv and phases.csv to {out}")


def main(argv: Optional[list] = None):
    """Console entry point; usage errors exit with status 1."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as e:
        e.show()
        sys.exit(1)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except click.Abort:
        click.echo("Aborted!", err=True)
        sys.exit(1)


if __name__ == '__main__':
    main()
