"""Run configuration read from INI files."""

import configparser
import logging
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Callable, Dict, Optional, Union

from .dynamics import REGIMES, STEADY, CavityParams
from .errors import ConfigError
from .lattice import (GEOMETRIES, MINIMUM, InitialDistribution, LatticeConfig, ModeProfile,
                      initial_distribution, load_distribution)
from .trajectory import JUMP_SAMPLING, WAITING_TIME

logger = logging.getLogger(__name__)

REDUCED = 'reduced'
FULL = 'full'
ENGINES = (REDUCED, FULL)

SUPERFLUID = 'superfluid'
MOTT = 'mott'
DELTA_PREFIX = 'delta:'

U64_MAX = 2**64 - 1


@dataclass(frozen=True)
class UnitaryConfig:
    """Lossless collapse-and-revival sweep."""

    delta_p: float
    coupling: float
    mean_nk: float
    truncation: float = 1e-12
    n_points: int = 2001

    def __post_init__(self):
        if self.delta_p == 0:
            raise ConfigError(f"unitary.delta_p: expected a non-zero detuning, got {self.delta_p!r}")
        if self.mean_nk < 0:
            raise ConfigError(f"unitary.mean_nk: expected a non-negative mean, got {self.mean_nk!r}")
        if not 0 < self.truncation < 1:
            raise ConfigError(f"unitary.truncation: expected 0 < truncation < 1, got {self.truncation!r}")
        if self.n_points < 3 or self.n_points % 2 == 0:
            raise ConfigError(f"unitary.n_points: expected an odd integer >= 3, got {self.n_points!r}")

    @property
    def params(self) -> CavityParams:
        return CavityParams.for_unitary(self.delta_p, self.coupling)


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs; defaults reproduce the diffraction-minimum collapse with N = 100."""

    geometry: str = MINIMUM
    N: int = 100
    M: int = 100
    K: Optional[int] = None
    initial: str = SUPERFLUID
    tau_max: float = 8.0
    record_interval: float = 0.01
    n_traj: int = 1
    seed: int = 0
    engine: str = REDUCED
    output_dir: str = 'output'
    jump_sampling: str = WAITING_TIME
    regime: str = STEADY
    physical: Optional[CavityParams] = None
    unitary: Optional[UnitaryConfig] = None
    base_dir: Optional[Path] = None

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise ConfigError(f"run.geometry: expected one of {GEOMETRIES}, got {self.geometry!r}")
        if self.K is None:
            object.__setattr__(self, 'K', self.M)
        if self.geometry == MINIMUM and self.K != self.M:
            raise ConfigError(f"run.K: diffraction minimum requires K = M = {self.M}, got {self.K}")
        if self.tau_max < 0:
            raise ConfigError(f"run.tau_max: expected tau_max >= 0, got {self.tau_max!r}")
        if not self.record_interval > 0:
            raise ConfigError(f"run.record_interval: expected a positive interval, got {self.record_interval!r}")
        if self.n_traj < 1:
            raise ConfigError(f"run.n_traj: expected at least 1 trajectory, got {self.n_traj!r}")
        if not 0 <= self.seed <= U64_MAX:
            raise ConfigError(f"run.seed: expected an unsigned 64-bit integer, got {self.seed!r}")
        if self.engine not in ENGINES:
            raise ConfigError(f"run.engine: expected one of {ENGINES}, got {self.engine!r}")
        if self.jump_sampling not in JUMP_SAMPLING:
            raise ConfigError(f"run.jump_sampling: expected one of {JUMP_SAMPLING}, got {self.jump_sampling!r}")
        if self.regime not in REGIMES:
            raise ConfigError(f"run.regime: expected one of {REGIMES}, got {self.regime!r}")

    def lattice(self) -> LatticeConfig:
        return LatticeConfig(M=self.M, K=self.K, N=self.N)

    def modes(self) -> ModeProfile:
        return ModeProfile.for_geometry(self.geometry, self.lattice())

    @property
    def amplitude_preset(self) -> str:
        """Fock-state preset for the full engine."""
        if self.initial not in (SUPERFLUID, MOTT):
            raise ConfigError(f"run.initial: full engine needs 'superfluid' or 'mott', got {self.initial!r}")
        return self.initial

    def initial_distribution(self) -> InitialDistribution:
        """Prior over z from the `initial` key."""
        cfg = self.lattice()
        if self.initial == SUPERFLUID:
            return initial_distribution(f"superfluid-{self.geometry[:3]}", cfg)
        if self.initial == MOTT:
            return initial_distribution('mott', cfg, geometry=self.geometry)
        if self.initial.startswith(DELTA_PREFIX):
            z_star = _parse_int('run.initial', self.initial[len(DELTA_PREFIX):])
            return initial_distribution('delta', cfg, geometry=self.geometry, z_star=z_star)
        path = Path(self.initial)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return load_distribution(path)

    def with_overrides(self, **overrides) -> 'RunConfig':
        """Copy with every non-None override applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def _parse_int(name: str, raw: str) -> int:
    try:
        return int(raw.strip())
    except ValueError:
        raise ConfigError(f"{name}: expected an integer, got {raw!r}")


def _parse_float(name: str, raw: str) -> float:
    try:
        return float(raw.strip())
    except ValueError:
        raise ConfigError(f"{name}: expected a real number, got {raw!r}")


def _parse_complex(name: str, raw: str) -> complex:
    try:
        value = complex(raw.strip().replace(' ', ''))
    except ValueError:
        raise ConfigError(f"{name}: expected a number such as 1.5 or 0.5+2j, got {raw!r}")
    return value.real if value.imag == 0 else value


def _parse_bool(name: str, raw: str) -> bool:
    value = raw.strip().lower()
    if value in ('1', 'true', 'yes', 'on'):
        return True
    if value in ('0', 'false', 'no', 'off'):
        return False
    raise ConfigError(f"{name}: expected true or false, got {raw!r}")


def _parse_str(name: str, raw: str) -> str:
    return raw.strip()


RUN_KEYS: Dict[str, Callable[[str, str], object]] = {
    'geometry': _parse_str,
    'N': _parse_int,
    'M': _parse_int,
    'K': _parse_int,
    'initial': _parse_str,
    'tau_max': _parse_float,
    'record_interval': _parse_float,
    'n_traj': _parse_int,
    'seed': _parse_int,
    'engine': _parse_str,
    'output_dir': _parse_str,
    'jump_sampling': _parse_str,
    'regime': _parse_str,
}

PHYSICAL_KEYS: Dict[str, Callable[[str, str], object]] = {
    'kappa': _parse_float,
    'delta_p': _parse_float,
    'delta_a': _parse_float,
    'g0': _parse_float,
    'g1': _parse_float,
    'a0': _parse_complex,
    'eta': _parse_complex,
    'alpha0': _parse_complex,
    'dispersive_shift': _parse_bool,
}

UNITARY_KEYS: Dict[str, Callable[[str, str], object]] = {
    'delta_p': _parse_float,
    'coupling': _parse_float,
    'mean_nk': _parse_float,
    'truncation': _parse_float,
    'n_points': _parse_int,
}

SECTIONS = {'run': RUN_KEYS, 'physical': PHYSICAL_KEYS, 'unitary': UNITARY_KEYS}
REQUIRED = {'physical': ('kappa', 'delta_p', 'delta_a', 'g0', 'g1'), 'unitary': ('delta_p', 'coupling', 'mean_nk')}


def _read_section(parser: configparser.ConfigParser, section: str) -> Dict[str, object]:
    keys = SECTIONS[section]
    values = {}
    for key, raw in parser.items(section):
        if key not in keys:
            raise ConfigError(f"{section}.{key}: unknown key (expected one of {', '.join(keys)})")
        values[key] = keys[key](f"{section}.{key}", raw)
    missing = [k for k in REQUIRED.get(section, ()) if k not in values]
    if missing:
        raise ConfigError(f"{section}: missing required key(s) {', '.join(missing)}")
    return values


def parse_config(text: str, base_dir: Optional[Path] = None) -> RunConfig:
    """
    Parse INI text into a RunConfig.

    Args:
        text: Config file contents with [run], [physical] and [unitary] sections.
        base_dir: Directory that relative distribution paths are resolved against.

    Raises:
        ConfigError: On syntax errors, unknown sections or keys, or invalid values.
    """
    parser = configparser.ConfigParser(interpolation=None, default_section='__defaults__')
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"config: {e}")

    unknown = [s for s in parser.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"config: unknown section(s) {', '.join(unknown)}")

    run = _read_section(parser, 'run') if parser.has_section('run') else {}
    physical = CavityParams(**_read_section(parser, 'physical')) if parser.has_section('physical') else None
    unitary = UnitaryConfig(**_read_section(parser, 'unitary')) if parser.has_section('unitary') else None

    config = RunConfig(**run, physical=physical, unitary=unitary, base_dir=base_dir)
    logger.debug(f"Parsed config: {config}")
    return config


def load_config(path: Union[str, Path]) -> RunConfig:
    """Read and parse a config file; relative paths inside it resolve against its directory."""
    path = Path(path)
    return parse_config(path.read_text(encoding='utf-8'), base_dir=path.parent)


def describe(config: RunConfig) -> Dict[str, object]:
    """Flat view of the run section, for logs and tool output."""
    return {f.name: getattr(config, f.name) for f in fields(config) if f.name not in ('physical', 'unitary', 'base_dir')}
