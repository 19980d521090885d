"""MCP Server for atomsqueeze - Expose trajectory simulations to AI assistants."""

from typing import Optional

import numpy as np
from mcp.server.fastmcp import FastMCP

from .dynamics import CavityParams, coherence_proxy, revival_time
from .errors import AtomSqueezeError, RegimeNotReachedError
from .lattice import GEOMETRIES, LatticeConfig, initial_distribution, poisson_distribution
from .stats import (closed_form_distribution, fit_regimes, fold, fwhm_estimate, measured_fwhm, moments,
                    peak, peak_estimate)
from .trajectory import run_trajectory

# Initialize FastMCP server
mcp = FastMCP("atomsqueeze")

# Initial-state presets per geometry
PRESETS = {
    'superfluid-max': 'binomial N_K statistics of a superfluid, diffraction maximum (Z = 1)',
    'superfluid-min': 'binomial N_odd - N_even of a superfluid, diffraction minimum (Z = 2)',
    'delta': 'definite value z* (Fock state or Mott insulator)',
    'mott': 'uniform filling N/M per site',
}


def _prior(preset: str, N: int, M: int, K: Optional[int], geometry: str, z_star: Optional[int]):
    cfg = LatticeConfig(M=M, K=M if K is None else K, N=N)
    return initial_distribution(preset, cfg, geometry=geometry, z_star=z_star)


@mcp.tool()
def list_presets() -> str:
    """List the available initial-state presets.

    Returns:
        A formatted string listing presets and geometries
    """
    lines = ["Available presets:"]
    for key, description in PRESETS.items():
        lines.append(f"  • {key}: {description}")
    lines.append(f"Geometries: {', '.join(GEOMETRIES)}")
    return "\n".join(lines)


@mcp.tool()
def simulate_trajectory(
    preset: str = 'superfluid-min',
    N: int = 100,
    M: int = 100,
    K: Optional[int] = None,
    geometry: str = 'minimum',
    z_star: Optional[int] = None,
    tau_max: float = 8.0,
    record_interval: float = 0.01,
    seed: int = 0,
    no_jump: bool = False
) -> str:
    """Run one photodetection trajectory and summarize the collapse.

    Args:
        preset: Initial-state preset (see list_presets)
        N: Number of atoms
        M: Number of lattice sites
        K: Number of illuminated sites (defaults to M)
        geometry: 'maximum' or 'minimum'
        z_star: Value of the delta preset
        tau_max: Final scaled time
        record_interval: Scaled time between samples
        seed: Random seed
        no_jump: Condition on detecting no photons

    Returns:
        Summary text with counts, final moments and fitted regimes
    """
    try:
        init = _prior(preset, N, M, K, geometry, z_star)
        record = run_trajectory(init, tau_max, record_interval, seed, condition='no-jump' if no_jump else 'unconditional')
    except AtomSqueezeError as e:
        return f"Error: {e}"

    final = record.samples[-1]
    result = [
        f"Trajectory seed={seed}, {preset}, N={N}, M={M}",
        f"  • photocounts: {len(record.jumps)} up to tau={final.tau:g}",
        f"  • final <|z|> = {final.mean_abs_z:.6g}, var |z| = {final.var_abs_z:.3g}",
        f"  • most likely |z|: {peak(fold(record.final))}",
    ]
    try:
        sqrt_fit, exp_fit = fit_regimes(record)
        result.append(f"  • sqrt regime: slope {sqrt_fit.slope:.4f} over tau in "
                      f"[{sqrt_fit.window[0]:.3g}, {sqrt_fit.window[1]:.3g}]")
        result.append(f"  • exponential regime: slope {exp_fit.slope:.4f}, R^2 {exp_fit.r_squared:.4f}")
    except RegimeNotReachedError as e:
        result.append(f"  • {e}")
    return "\n".join(result)


@mcp.tool()
def estimate_width(
    m: int,
    tau: float,
    preset: str = 'superfluid-min',
    N: int = 100,
    M: int = 100,
    geometry: str = 'minimum'
) -> str:
    """Compare width estimators with the exact distribution after m counts at scaled time tau.

    Args:
        m: Number of photocounts
        tau: Scaled time
        preset: Initial-state preset
        N: Number of atoms
        M: Number of lattice sites
        geometry: 'maximum' or 'minimum'

    Returns:
        Exact moments next to the sqrt(m/tau) peak and sqrt(2 ln2/tau) FWHM estimates
    """
    try:
        init = _prior(preset, N, M, None, geometry, None)
        d = closed_form_distribution(init, m, tau)
        mo = moments(fold(d))
        fwhm = measured_fwhm(d)
        lines = [
            f"Distribution after m={m} counts at tau={tau:g}:",
            f"  • exact <|z|> = {mo.mean_z:.6g}, peak estimate sqrt(m/tau) = {peak_estimate(m, tau):.6g}",
            f"  • exact var |z| = {mo.var_z:.6g}, 1/(4 tau) = {1.0 / (4.0 * tau):.6g}",
            f"  • FWHM estimate sqrt(2 ln2/tau) = {fwhm_estimate(tau):.6g}, measured = "
            + (f"{fwhm:.6g}" if fwhm is not None else "below 3Z"),
        ]
    except AtomSqueezeError as e:
        return f"Error: {e}"
    return "\n".join(lines)


@mcp.tool()
def coherence(
    mean_nk: float,
    delta_p: float = 1.0,
    coupling: float = 1.0,
    points: int = 9
) -> str:
    """Coherence Q(t) of a Poissonian atom-number superposition in a lossless cavity.

    Args:
        mean_nk: Mean illuminated atom number
        delta_p: Probe-cavity detuning
        coupling: Lossless coupling C = U10 a0 / delta_p
        points: Number of times sampled over [0, t_rev]

    Returns:
        Q at evenly spaced times up to the revival time
    """
    try:
        params = CavityParams.for_unitary(delta_p, coupling)
        dist = poisson_distribution(mean_nk)
        t_rev = revival_time(params)
        t = np.linspace(0.0, t_rev, max(points, 2))
        q = coherence_proxy(dist, params, t)
    except AtomSqueezeError as e:
        return f"Error: {e}"

    lines = [f"Revival time t_rev = {t_rev:.6g}"]
    for ti, qi in zip(t, q):
        lines.append(f"  • t/t_rev = {ti / t_rev:.3f}: Q = {qi:.6f}")
    return "\n".join(lines)


def main():
    """Entry point for the MCP server."""
    mcp.run()


if __name__ == "__main__":
    main()
