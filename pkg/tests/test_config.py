"""Tests for INI run configurations."""

from pathlib import Path

import pytest

from atomsqueeze.config import RunConfig, UnitaryConfig, describe, load_config, parse_config
from atomsqueeze.errors import ConfigError
from tests.conftest import config_fixture, load_fixture_file


class TestParseConfig:
    """Tests for parsing config text."""

    def test_minimal(self):
        """Test a [run] section with the usual keys."""
        cfg = parse_config(load_fixture_file("minimal.ini"))
        assert (cfg.geometry, cfg.N, cfg.M, cfg.K) == ('minimum', 4, 4, 4)
        assert cfg.tau_max == 0.5
        assert cfg.seed == 3
        assert cfg.physical is None and cfg.unitary is None

    def test_defaults(self):
        """Test that an empty file gives the default run."""
        cfg = parse_config("")
        assert cfg == RunConfig()
        assert (cfg.N, cfg.M, cfg.tau_max, cfg.record_interval) == (100, 100, 8.0, 0.01)

    def test_physical_section(self):
        """Test the cavity constants, including complex values."""
        cfg = parse_config("[physical]\nkappa = 1\ndelta_p = 0.5\ndelta_a = -50\ng0 = 5\ng1 = 5\n"
                           "a0 = 0.5+1j\ndispersive_shift = false\n")
        assert cfg.physical.a0 == 0.5 + 1j
        assert cfg.physical.dispersive_shift is False
        assert cfg.physical.eta == 0.0

    def test_unitary_section(self):
        """Test the lossless sweep section."""
        cfg = parse_config(load_fixture_file("unitary.ini"))
        assert cfg.unitary == UnitaryConfig(delta_p=1.0, coupling=0.5, mean_nk=4.0, n_points=101)

    def test_unitary_zero_detuning(self):
        """Test that the lossless sweep is refused at delta_p = 0 instead of dividing by it."""
        with pytest.raises(ConfigError, match="unitary.delta_p"):
            parse_config("[unitary]\ndelta_p = 0\ncoupling = 0.5\nmean_nk = 4\n")

    def test_unknown_key(self):
        """Test that a misspelled key is rejected with its name."""
        with pytest.raises(ConfigError, match="run.taumax"):
            parse_config(load_fixture_file("unknown_key.ini"))

    def test_bad_value(self):
        """Test that an unparsable value names its key."""
        with pytest.raises(ConfigError, match="run.N"):
            parse_config(load_fixture_file("bad_value.ini"))

    def test_unknown_section(self):
        """Test that unknown sections are rejected."""
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config("[plotting]\ncolor = red\n")

    def test_missing_physical_key(self):
        """Test that the cavity section needs all its rates."""
        with pytest.raises(ConfigError, match="kappa"):
            parse_config("[physical]\ndelta_p = 0.5\ndelta_a = -50\ng0 = 5\ng1 = 5\n")

    def test_syntax_error(self):
        """Test that malformed INI text is a config error."""
        with pytest.raises(ConfigError):
            parse_config("geometry = minimum\n")

    @pytest.mark.parametrize("text", [
        "[run]\ngeometry = sideways\n",
        "[run]\ngeometry = minimum\nM = 4\nK = 2\n",
        "[run]\ntau_max = -1\n",
        "[run]\nrecord_interval = 0\n",
        "[run]\nn_traj = 0\n",
        "[run]\nseed = -1\n",
        "[run]\nengine = quantum\n",
        "[run]\njump_sampling = euler\n",
        "[run]\nregime = adiabatic\n",
        "[physical]\nkappa = -1\ndelta_p = 0\ndelta_a = 1\ng0 = 1\ng1 = 1\n",
        "[physical]\nkappa = 1\ndelta_p = 0\ndelta_a = 1\ng0 = 1\ng1 = 1\ndispersive_shift = maybe\n",
        "[unitary]\ndelta_p = 1\ncoupling = 1\nmean_nk = 4\nn_points = 100\n",
    ])
    def test_invalid_values(self, text):
        """Test rejected values in every section."""
        with pytest.raises(ConfigError):
            parse_config(text)


class TestRunConfig:
    """Tests for the priors and overrides derived from a run."""

    def test_superfluid_prior(self):
        """Test that the superfluid prior follows the geometry."""
        cfg = RunConfig(geometry='maximum', N=4, M=4, K=2)
        init = cfg.initial_distribution()
        assert list(init.z_grid) == [0, 1, 2, 3, 4]
        assert init.p0[2] == pytest.approx(6 / 16)

    def test_delta_prior(self):
        """Test the delta:<z> form."""
        init = RunConfig(N=4, M=4, initial='delta:2').initial_distribution()
        assert init.probability(2) == 1.0

    def test_delta_bad_value(self):
        """Test that delta needs an integer."""
        with pytest.raises(ConfigError):
            RunConfig(N=4, M=4, initial='delta:two').initial_distribution()

    def test_file_prior_relative_to_config(self):
        """Test that a prior path resolves against the config directory."""
        cfg = load_config(config_fixture("file_prior.ini"))
        init = cfg.initial_distribution()
        assert list(init.z_grid) == [-2, 0, 2]

    def test_missing_prior_file(self, tmp_path):
        """Test that a missing prior file is an I/O error."""
        with pytest.raises(OSError):
            RunConfig(N=2, M=2, initial='absent.txt', base_dir=tmp_path).initial_distribution()

    def test_full_engine_presets(self):
        """Test that the full engine accepts only Fock-state presets."""
        assert RunConfig(initial='mott').amplitude_preset == 'mott'
        with pytest.raises(ConfigError):
            RunConfig(initial='delta:0').amplitude_preset

    def test_overrides_skip_none(self):
        """Test that None overrides keep config values."""
        cfg = RunConfig(seed=5, output_dir='a').with_overrides(seed=None, output_dir='b')
        assert (cfg.seed, cfg.output_dir) == (5, 'b')

    def test_describe(self):
        """Test the flat view of the run section."""
        view = describe(RunConfig())
        assert view['geometry'] == 'minimum'
        assert 'physical' not in view


class TestLoadConfig:
    """Tests for reading config files."""

    def test_missing_file(self, tmp_path):
        """Test that a missing file raises OSError."""
        with pytest.raises(OSError):
            load_config(tmp_path / "absent.ini")

    def test_shipped_configs(self):
        """Test that every config in configs/ parses."""
        root = Path(__file__).parent.parent / "configs"
        paths = sorted(root.glob("*.ini"))
        assert paths
        for path in paths:
            load_config(path)
