"""Tests for moments, width estimators, regime fits and ensemble statistics."""

import math

import numpy as np
import pytest

from atomsqueeze.errors import ConfigError, DarkStateError, RegimeNotReachedError
from atomsqueeze.lattice import LatticeConfig, initial_distribution
from atomsqueeze.stats import (DistributionSnapshot, closed_form_distribution, fit_exponential_regime,
                               fit_regimes, fit_sqrt_regime, fold, fwhm_estimate, likelihood_width,
                               log_posterior_weights, martingale_zscores, measured_fwhm, moments,
                               outcome_chi_square, peak, peak_estimate, three_point_variance)


class FakeRecord:
    """Minimal record exposing the columns used by the regime fits."""

    def __init__(self, tau, var_abs_z, var_z=None, step=2, m=None, z_grid=None):
        self.step = step
        self.z_grid = np.arange(201) if z_grid is None else np.asarray(z_grid)
        self._columns = {
            'tau': np.asarray(tau, dtype=float),
            'm': np.zeros(len(tau)) if m is None else np.asarray(m, dtype=float),
            'var_abs_z': np.asarray(var_abs_z, dtype=float),
            'var_z': np.asarray(var_abs_z if var_z is None else var_z, dtype=float),
        }

    def column(self, name):
        return self._columns[name]


@pytest.fixture
def uniform_prior():
    """Flat prior over z = 0..200 with Z = 1."""
    z = np.arange(201)
    return initial_distribution('custom', LatticeConfig(M=1, K=1, N=200), z_grid=z, p0=np.full(201, 1 / 201))


def sqrt_record(tau_max=1.0):
    """Peak at z0 = 30 on a unit grid, m = z0^2 tau counts and var |z| = 1/(4 tau) after a start at 100."""
    tau = np.round(np.arange(0.0, tau_max + 1e-9, 0.005), 12)
    var = np.where(tau > 0, 1.0 / (4.0 * np.where(tau > 0, tau, 1.0)), 100.0)
    return FakeRecord(tau, var, step=1, m=np.round(900.0 * tau))


class TestDistributionSnapshot:
    """Tests for snapshot construction."""

    def test_rejects_unnormalized(self):
        """Test that probabilities must sum to 1."""
        with pytest.raises(ConfigError):
            DistributionSnapshot(np.array([0, 1]), np.array([0.5, 0.6]), 1)

    def test_all_weights_vanish(self):
        """Test that an all -inf weight vector is a dark state."""
        with pytest.raises(DarkStateError):
            DistributionSnapshot.from_log_weights(np.array([0, 1]), np.full(2, -np.inf), 1)

    def test_from_log_weights_normalizes(self):
        """Test normalization of very negative log-weights."""
        d = DistributionSnapshot.from_log_weights(np.array([0, 1]), np.array([-1000.0, -1000.0 + math.log(3)]), 1)
        assert d.p == pytest.approx([0.25, 0.75])


class TestClosedForm:
    """Tests for the posterior after m counts at scaled time tau."""

    def test_no_counts_no_time(self, three_point_prior):
        """Test that the posterior at m = 0, tau = 0 is the prior."""
        d = closed_form_distribution(three_point_prior, 0, 0.0)
        assert np.allclose(d.p, three_point_prior.p0, rtol=1e-14, atol=0)

    def test_one_count_removes_zero(self, three_point_prior):
        """Test that a single count empties z = 0."""
        d = closed_form_distribution(three_point_prior, 1, 0.0)
        assert d.probability(0) == 0.0
        assert d.probability(2) == pytest.approx(0.5)

    def test_zero_keeps_weight_without_counts(self):
        """Test ln 0^0 = 0 for the dark component."""
        w = log_posterior_weights(np.array([0, 2]), np.log([0.5, 0.5]), 0, 1.0)
        assert w[0] == pytest.approx(math.log(0.5))
        assert w[1] == pytest.approx(math.log(0.5) - 4.0)

    def test_no_count_decay(self, three_point_prior):
        """Test that without counts the distribution collapses onto z = 0."""
        d = closed_form_distribution(three_point_prior, 0, 5.0)
        expected = 0.5 / (0.5 + 0.5 * math.exp(-20.0))
        assert d.probability(0) == pytest.approx(expected, rel=1e-14)


class TestMoments:
    """Tests for moments, folding and peaks."""

    def test_three_point(self, three_point_prior):
        """Test the moments of p(-2) = p(2) = 1/4, p(0) = 1/2."""
        mo = moments(DistributionSnapshot.from_initial(three_point_prior))
        assert mo.mean_z == pytest.approx(0.0)
        assert mo.var_z == pytest.approx(2.0)
        assert mo.mean_abs_z == pytest.approx(1.0)
        assert mo.var_abs_z == pytest.approx(1.0)
        assert mo.width_abs == pytest.approx(1.0)

    def test_fold(self, three_point_prior):
        """Test folding onto |z|."""
        d = fold(DistributionSnapshot.from_initial(three_point_prior))
        assert list(d.z_grid) == [0, 2]
        assert d.p == pytest.approx([0.5, 0.5])

    def test_peak_ties(self):
        """Test that ties resolve to the smallest grid point."""
        d = DistributionSnapshot(np.array([-2, 0, 2]), np.array([0.5, 0.0, 0.5]), 2)
        assert peak(d) == -2

    def test_collapsed_variance_is_positive(self, uniform_prior):
        """Test that exponentially small variances are resolved, not rounded to zero."""
        d = closed_form_distribution(uniform_prior, 300000, 30.0)
        mo = moments(d)
        assert 0.0 < mo.var_z < 1e-20


class TestWidthEstimators:
    """Tests for the three-point variance, peak and FWHM estimates."""

    def test_three_point_variance(self, uniform_prior):
        """Test the three-point formula on a distribution concentrated at z0 = 100."""
        d = closed_form_distribution(uniform_prior, 30000, 3.0)
        assert d.probability(100) > 0.95
        assert d.probability(101) / d.probability(100) == pytest.approx(0.0025, rel=0.05)
        assert d.probability(99) / d.probability(100) == pytest.approx(0.0024, rel=0.05)
        assert three_point_variance(d, 100) == pytest.approx(moments(d).var_z, rel=0.01)

    def test_three_point_at_edge(self, small_minimum):
        """Test that a neighbour beyond the grid counts as zero."""
        d = DistributionSnapshot.from_initial(initial_distribution('superfluid-min', small_minimum))
        assert three_point_variance(d, 2) == pytest.approx(4 * 0.5)

    def test_three_point_off_grid(self, three_point_prior):
        """Test that z0 must be a grid point."""
        with pytest.raises(ConfigError):
            three_point_variance(DistributionSnapshot.from_initial(three_point_prior), 1)

    def test_peak_estimate(self):
        """Test sqrt(m / tau)."""
        assert peak_estimate(50, 0.005) == pytest.approx(100.0)

    def test_peak_estimate_rejects_negative_count(self):
        """Test that m < 0 is a configuration error rather than a math domain error."""
        with pytest.raises(ConfigError, match="m: photocount must be >= 0"):
            peak_estimate(-1, 0.5)

    @pytest.mark.parametrize("tau", [0.0, -1.0])
    def test_estimates_need_positive_tau(self, tau):
        """Test that both estimates are undefined at tau <= 0."""
        with pytest.raises(ConfigError):
            peak_estimate(1, tau)
        with pytest.raises(ConfigError):
            fwhm_estimate(tau)

    def test_fwhm_continuous_regime(self, uniform_prior):
        """Test measured FWHM and variance against sqrt(2 ln 2 / tau) and 1/(4 tau)."""
        tau = 0.005
        d = closed_form_distribution(uniform_prior, 50, tau)
        assert peak(d) == pytest.approx(peak_estimate(50, tau), abs=1)
        assert measured_fwhm(d) == pytest.approx(fwhm_estimate(tau), rel=0.1)
        assert moments(d).var_z == pytest.approx(1.0 / (4.0 * tau), rel=0.1)

    def test_fwhm_below_three_steps(self, uniform_prior):
        """Test that a collapsed distribution has no FWHM."""
        assert measured_fwhm(closed_form_distribution(uniform_prior, 30000, 3.0)) is None

    def test_fwhm_without_crossing(self):
        """Test that a peak at the grid edge has no half-maximum crossing."""
        z = np.arange(10)
        p = np.linspace(1.0, 2.0, 10)
        assert measured_fwhm(DistributionSnapshot(z, p / math.fsum(p), 1)) is None


class TestRegimeFits:
    """Tests for the sqrt and exponential regime fits."""

    def test_sqrt_slope(self):
        """Test slope -1/2 over more than a decade once var |z| drops below sigma0^2 / 9."""
        fit = fit_sqrt_regime(sqrt_record())
        assert fit.slope == pytest.approx(-0.5, abs=0.03)
        assert fit.r_squared > 0.99
        assert fit.spread < 0.1
        assert fit.window[0] == pytest.approx(0.025)
        assert fit.window[1] / fit.window[0] >= 10.0

    def test_sqrt_uses_counts_not_moments(self):
        """Test that below sigma0/3 the fitted width depends only on (m, tau), not on var |z|."""
        record = sqrt_record()
        var_abs = record.column('var_abs_z')
        halved = FakeRecord(record.column('tau'), np.where(var_abs < 100.0 / 9.0, var_abs / 2.0, var_abs),
                            var_z=record.column('var_z'), step=1, m=record.column('m'))
        fit, other = fit_sqrt_regime(record), fit_sqrt_regime(halved)
        assert other.window == fit.window
        assert other.slope == fit.slope

    def test_no_flat_decade(self):
        """Test that a record ending before a full decade of flat width * sqrt(tau) has no sqrt window."""
        with pytest.raises(RegimeNotReachedError, match="spans tau ratio"):
            fit_sqrt_regime(sqrt_record(tau_max=0.2))

    def test_coarse_grid_has_no_sqrt_window(self):
        """Test that a grid too coarse for the peak width leaves no flat decade."""
        tau = np.round(np.arange(0.0, 1.0 + 1e-9, 0.005), 12)
        var = np.where(tau > 0, 1.0, 100.0)
        record = FakeRecord(tau, var, step=20, m=np.round(360000.0 * tau), z_grid=np.arange(0, 2001, 20))
        with pytest.raises(RegimeNotReachedError, match="spans tau ratio"):
            fit_sqrt_regime(record)

    def test_sqrt_only_record(self):
        """Test that a record without the exponential stage fails the combined fit only."""
        record = sqrt_record()
        fit_sqrt_regime(record)
        with pytest.raises(RegimeNotReachedError, match="did not reach regime"):
            fit_exponential_regime(record)
        with pytest.raises(RegimeNotReachedError, match="did not reach regime"):
            fit_regimes(record)

    def test_exponential_slope(self):
        """Test the rate of an exponentially shrinking variance."""
        tau = np.linspace(0.0, 3.0, 301)
        var = np.where(tau < 1.0, 100.0, np.exp(-8.0 * tau))
        fit = fit_exponential_regime(FakeRecord(tau, var))
        assert fit.slope == pytest.approx(-8.0, rel=1e-9)
        assert fit.window[0] >= 1.0

    def test_both_regimes(self):
        """Test a record passing through both stages."""
        tau = np.round(np.arange(0.0, 3.0 + 1e-9, 0.005), 12)
        safe = np.where(tau > 0, tau, 1.0)
        var = np.where(tau == 0, 100.0, np.where(tau <= 0.2, 1.0 / (4.0 * safe), 0.2 * np.exp(-8.0 * (tau - 0.2))))
        sqrt_fit, exp_fit = fit_regimes(FakeRecord(tau, var, m=np.round(900.0 * tau)))
        assert sqrt_fit.slope == pytest.approx(-0.5, abs=0.03)
        assert exp_fit.slope == pytest.approx(-8.0, rel=1e-6)

    def test_empty_window(self):
        """Test that a record that never narrows has no sqrt window."""
        record = FakeRecord(np.linspace(0, 1, 11), np.full(11, 100.0))
        with pytest.raises(RegimeNotReachedError):
            fit_sqrt_regime(record)


class TestLikelihoodWidth:
    """Tests for the peak width of the count likelihood."""

    def test_separated_peak(self):
        """Test 1/(2 sqrt(tau)) for a peak far from z = 0."""
        width = likelihood_width(np.arange(-200, 201), np.array([90]), np.array([0.1]))
        assert width[0] == pytest.approx(1.0 / (2.0 * math.sqrt(0.1)), rel=0.01)

    def test_no_counts_is_half_normal(self):
        """Test sigma sqrt(1 - 2/pi) for the folded Gaussian around z = 0."""
        width = likelihood_width(np.arange(-400, 401), np.array([0]), np.array([0.001]))
        sigma = 1.0 / math.sqrt(2.0 * 0.001)
        assert width[0] == pytest.approx(sigma * math.sqrt(1.0 - 2.0 / math.pi), rel=0.01)

    def test_independent_of_sign_convention(self):
        """Test that a symmetric grid and its non-negative half give the same width."""
        m, tau = np.array([4, 40]), np.array([0.05, 0.2])
        assert likelihood_width(np.arange(-100, 101, 2), m, tau) == pytest.approx(
            likelihood_width(np.arange(0, 101, 2), m, tau))


class TestOutcomeChiSquare:
    """Tests for the outcome goodness-of-fit test."""

    def test_perfect_match(self):
        """Test a zero statistic when counts equal expectations."""
        result = outcome_chi_square([25, 50, 25], [0.25, 0.5, 0.25])
        assert result.statistic == pytest.approx(0.0)
        assert result.dof == 2
        assert result.p_value == pytest.approx(1.0)

    def test_sparse_bins_merge(self):
        """Test that bins with expected counts below 5 are merged."""
        result = outcome_chi_square([0, 1, 50, 49], [0.001, 0.009, 0.49, 0.5])
        assert result.dof == 1

    def test_single_bin(self):
        """Test that a single merged bin gives no test."""
        result = outcome_chi_square([3], [1.0])
        assert (result.statistic, result.dof, result.p_value) == (0.0, 0, 1.0)

    def test_detects_mismatch(self):
        """Test a small p-value for clearly wrong probabilities."""
        result = outcome_chi_square([900, 100], [0.5, 0.5])
        assert result.p_value < 1e-10


class TestMartingaleZscores:
    """Tests for ensemble-average standard scores."""

    def test_values(self):
        """Test (mean - p0) / SE with the ddof=1 standard error."""
        mean = np.array([0.5, 0.5])
        mean_sq = np.array([0.5, 0.5])
        scores = martingale_zscores(mean, mean_sq, np.array([0.4, 0.5]), 5)
        se = math.sqrt(0.25 * 5 / 4 / 5)
        assert scores == pytest.approx([0.1 / se, 0.0])

    def test_zero_spread(self):
        """Test that identical posteriors give zero or infinite scores."""
        scores = martingale_zscores(np.array([1.0, 0.0]), np.array([1.0, 0.0]), np.array([1.0, 0.5]), 3)
        assert scores[0] == 0.0
        assert np.isinf(scores[1])

    def test_needs_two(self):
        """Test that a single trajectory has no standard error."""
        with pytest.raises(ConfigError):
            martingale_zscores(np.array([1.0]), np.array([1.0]), np.array([1.0]), 1)
