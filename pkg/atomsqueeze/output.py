"""CSV files and gnuplot scripts written by the command-line tool."""

import csv
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .stats import ChiSquareResult
from .trajectory import SAMPLE_FIELDS, EnsembleSummary, TrajectoryRecord

logger = logging.getLogger(__name__)


def _number(value) -> str:
    """Full-precision decimal text."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([_number(v) for v in row])
    logger.debug(f"Wrote {path}")
    return path


def write_trajectory_csv(record: TrajectoryRecord, path: Path, tau_rate: Optional[float] = None) -> Path:
    """One row per checkpoint; a time_s column t = tau / tau_rate follows when the rate is known."""
    header = list(SAMPLE_FIELDS)
    if tau_rate is not None:
        header.append('time_s')
    rows = []
    for s in record.samples:
        row = [s.tau, s.m, s.mean_z, s.mean_abs_z, s.var_z, s.var_abs_z, s.width_abs, s.is_jump_interval]
        if tau_rate is not None:
            row.append(s.tau / tau_rate)
        rows.append(row)
    return _write_rows(path, header, rows)


def write_events_csv(record: TrajectoryRecord, path: Path, tau_rate: Optional[float] = None) -> Path:
    header = ['jump_index', 'tau_jump'] + (['time_s'] if tau_rate is not None else [])
    rows = []
    for i, tau in enumerate(record.jumps, start=1):
        rows.append([i, tau] + ([tau / tau_rate] if tau_rate is not None else []))
    return _write_rows(path, header, rows)


def write_ensemble_csv(summary: EnsembleSummary, path: Path) -> Path:
    """Ensemble-mean conditional variances and the mean distribution per checkpoint."""
    header = ['tau', 'mean_var_z', 'mean_var_abs_z'] + [f"p[{int(z)}]" for z in summary.z_grid]
    rows = [[tau, vz, va] + list(p) for tau, vz, va, p in
            zip(summary.tau, summary.mean_var_z, summary.mean_var_abs_z, summary.mean_p)]
    return _write_rows(path, header, rows)


def write_outcomes_csv(abs_z: np.ndarray, counts: np.ndarray, expected_p: np.ndarray, path: Path) -> Path:
    return _write_rows(path, ['abs_z', 'count', 'expected_p'], zip(abs_z, counts, expected_p))


def write_outcome_test_csv(result: ChiSquareResult, path: Path) -> Path:
    return _write_rows(path, ['statistic', 'dof', 'p_value'], [[result.statistic, result.dof, result.p_value]])


def write_oracle_report(tau: np.ndarray, deviations: np.ndarray, path: Path) -> Path:
    return _write_rows(path, ['tau', 'max_abs_deviation'], zip(tau, deviations))


def write_coherence_csv(t: np.ndarray, t_rev: float, q: np.ndarray, path: Path, tolerance: float = 1e-9) -> Path:
    """Q(t) with a revival flag where t is a whole multiple of t_rev."""
    ratio = t / t_rev
    is_revival = np.abs(ratio - np.round(ratio)) * t_rev <= tolerance * max(t_rev, 1.0)
    return _write_rows(path, ['t', 't_over_t_rev', 'Q', 'is_revival'], zip(t, ratio, q, is_revival))


def write_phases_csv(n_k: np.ndarray, p0: np.ndarray, phase_rate: np.ndarray, phase_at_t_rev: np.ndarray,
                     path: Path) -> Path:
    return _write_rows(path, ['n_k', 'p0', 'phase_rate', 'phase_at_t_rev'],
                       zip(n_k, p0, phase_rate, phase_at_t_rev))


def write_plot_script(path: Path, series: List[tuple]) -> Path:
    """
    Gnuplot script drawing width_abs against tau, linear and log scale side by side.

    Args:
        path: Script location; data files are referenced relative to it.
        series: (csv file name, legend title) pairs.
    """
    plots = ", ".join(f"'{name}' using 'tau':'width_abs' with lines title '{title}'" for name, title in series)
    lines = [
        "# gnuplot script: width of the atom-number distribution during photodetection",
        "set datafile separator ','",
        "set terminal pngcairo size 1200,500",
        "set output 'width.png'",
        "set multiplot layout 1,2",
        "set xlabel 'tau'",
        "set ylabel 'width of |z|'",
        "set title 'linear scale'",
        f"plot {plots}",
        "set logscale xy",
        "set format y '10^{%L}'",
        "set title 'log scale'",
        f"plot {plots}",
        "unset multiplot",
    ]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding='utf-8')
    logger.debug(f"Wrote {path}")
    return path
