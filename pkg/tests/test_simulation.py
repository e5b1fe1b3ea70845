import math

import numpy as np
import pytest

from qsync import (
    Deterministic,
    EstimatorSpec,
    Gaussian,
    LocationScaleGaussian,
    LocationShiftOfBase,
    OneSidedExponential,
    RiskFormulaInput,
    RiskReport,
    Uniform,
    draw_dataset,
    exact_risk_equal_p,
    monte_carlo_risk,
    replication_rng,
    risk_grid,
    risk_log_ratios,
)
from qsync.errors import DomainError, ModelError


class TestSeeding:
    def test_replication_rng_is_keyed_by_all_coordinates(self):
        a = replication_rng(7, 1, 2, 3).uniform(size=4)
        b = replication_rng(7, 1, 2, 3).uniform(size=4)
        assert np.array_equal(a, b)
        for other in [(8, 1, 2, 3), (7, 0, 2, 3), (7, 1, 0, 3), (7, 1, 2, 0)]:
            c = replication_rng(*other).uniform(size=4)
            assert not np.array_equal(a, c)

    def test_draw_dataset_reproducible(self):
        model = LocationShiftOfBase(Uniform(0.0, 1.0), -0.3, 0.3)
        d1 = draw_dataset(model, 4, 6, seed=42)
        d2 = draw_dataset(model, 4, 6, seed=42)
        for u1, u2 in zip(d1.units, d2.units):
            assert np.array_equal(u1, u2)
        d3 = draw_dataset(model, 4, 6, seed=43)
        assert not np.array_equal(d1.units[0], d3.units[0])

    def test_ragged_draws(self):
        model = Deterministic(Uniform(0.0, 1.0))
        ds = draw_dataset(model, 3, (2, 5, 3), seed=1)
        assert ds.sizes == (2, 5, 3)
        assert ds.support == (0.0, 1.0)


class TestModels:
    def test_deterministic_properties(self):
        model = Deterministic(Uniform(0.0, 1.0))
        assert model.population_quantile_variance == 0.0
        assert model.truth_distribution() == Uniform(0.0, 1.0)
        assert model.dataset_support == (0.0, 1.0)
        assert "deterministic" in model.model_id

    def test_location_shift_properties(self):
        model = LocationShiftOfBase(Uniform(0.0, 1.0), -0.3, 0.3)
        assert model.population_quantile_variance == pytest.approx(0.03, rel=1e-14)
        assert model.mean_shift == 0.0
        truth = model.truth_quantile_function()
        assert float(np.asarray(truth(0.5))) == pytest.approx(0.5, rel=1e-14)
        assert model.dataset_support == (-0.3, 1.3)
        assert model.location_reference == Uniform(0.0, 1.0)

    def test_location_shift_with_nonzero_mean(self):
        model = LocationShiftOfBase(Uniform(0.0, 1.0), 0.0, 1.0)
        assert model.mean_shift == 0.5
        assert model.truth_distribution() == Uniform(0.5, 1.5)

    def test_location_shift_rejects_bad_range(self):
        with pytest.raises(ModelError):
            LocationShiftOfBase(Uniform(0.0, 1.0), 0.5, -0.5)

    def test_gaussian_location_scale_properties(self):
        model = LocationScaleGaussian()
        assert model.population_quantile_variance == pytest.approx(
            16.0 / 12.0 + 0.16 / 12.0, rel=1e-12
        )
        assert model.truth_distribution() == Gaussian(0.0, 1.0)
        assert model.dataset_support is None
        assert model.location_reference is None

    def test_gaussian_location_scale_sampling_sanity(self):
        rng = replication_rng(5)
        model = LocationScaleGaussian()
        matrix = model.sample_matrix(rng, 6, 20_000)
        assert matrix.shape == (6, 20_000)
        assert np.all(np.abs(matrix.mean(axis=1)) < 2.3)
        sds = matrix.std(axis=1)
        assert np.all((sds > 0.75) & (sds < 1.25))

    def test_truncated_sampling_stays_in_window(self):
        model = LocationScaleGaussian(truncation=(-2.5, 2.5))
        ds = draw_dataset(model, 5, 200, seed=3)
        pooled = ds.pooled().atoms
        assert pooled.min() >= -2.5 and pooled.max() <= 2.5
        assert ds.support == (-2.5, 2.5)

    def test_bad_truncation(self):
        with pytest.raises(ModelError):
            LocationScaleGaussian(truncation=(2.0, -2.0))
        hopeless = LocationScaleGaussian(truncation=(30.0, 31.0))
        with pytest.raises(ModelError):
            draw_dataset(hopeless, 2, 5, seed=1)

    def test_scale_must_be_positive(self):
        with pytest.raises(ModelError):
            LocationScaleGaussian(scale_low=-0.1, scale_high=1.0)


class TestEstimatorSpec:
    def test_labels(self):
        assert EstimatorSpec().label == "non-smoothed"
        assert EstimatorSpec(kind="smoothed").label == "smoothed[auto,silverman]"
        assert (
            EstimatorSpec(kind="smoothed", mode="gaussian", bandwidth=0.05).label
            == "smoothed[gaussian,0.05]"
        )
        assert EstimatorSpec(kind="parametric").label == "parametric"

    def test_validation(self):
        with pytest.raises(DomainError):
            EstimatorSpec(kind="fancy")
        with pytest.raises(DomainError):
            EstimatorSpec(mode="sideways")
        with pytest.raises(DomainError):
            EstimatorSpec(bandwidth="magic")
        with pytest.raises(DomainError):
            EstimatorSpec(bandwidth=-0.1)
        with pytest.raises(DomainError):
            EstimatorSpec(grid_size=0)


class TestMonteCarloRisk:
    def test_matches_exact_risk_for_deterministic_uniform(self):
        model = Deterministic(Uniform(0.0, 1.0))
        report = monte_carlo_risk(model, EstimatorSpec(), 10, 10, 1500, seed=17)
        exact = exact_risk_equal_p(
            RiskFormulaInput(
                n=10, sizes=10, quantile_variance=0.0, distribution=Uniform(0.0, 1.0)
            )
        )
        assert abs(report.risk - exact) <= 4.5 * report.se
        assert report.se > 0.0
        assert report.replications == 1500

    def test_matches_parametric_closed_form(self):
        model = LocationShiftOfBase(Uniform(0.0, 1.0), -0.5, 0.5)
        spec = EstimatorSpec(kind="parametric")
        report = monte_carlo_risk(model, spec, 10, 5, 3000, seed=23)
        sigma0_sq = 1.0 / 12.0
        gamma_sq = 1.0 / 12.0
        closed = (sigma0_sq + gamma_sq) / 50.0 + (gamma_sq / 10.0) * (4.0 / 5.0)
        assert closed == pytest.approx(0.01, rel=1e-12)
        assert abs(report.risk - closed) <= 4.5 * report.se

    def test_parametric_needs_a_location_family(self):
        with pytest.raises(ModelError):
            monte_carlo_risk(
                LocationScaleGaussian(), EstimatorSpec(kind="parametric"),
                3, 5, 2, seed=1,
            )

    def test_bit_identical_repeats(self):
        model = LocationShiftOfBase(Uniform(0.0, 1.0), -0.3, 0.3)
        spec = EstimatorSpec(kind="smoothed")
        r1 = monte_carlo_risk(model, spec, 4, 6, 25, seed=11)
        r2 = monte_carlo_risk(model, spec, 4, 6, 25, seed=11)
        assert r1.risk == r2.risk
        assert r1.se == r2.se

    def test_se_scales_with_replications(self):
        model = Deterministic(Uniform(0.0, 1.0))
        small = monte_carlo_risk(model, EstimatorSpec(), 4, 4, 400, seed=29)
        large = monte_carlo_risk(model, EstimatorSpec(), 4, 4, 1600, seed=31)
        assert 1.6 <= small.se / large.se <= 2.4

    def test_ragged_cell(self):
        model = LocationShiftOfBase(Uniform(0.0, 1.0), -0.3, 0.3)
        report = monte_carlo_risk(model, EstimatorSpec(), 3, (2, 3, 4), 40, seed=5)
        assert report.size_label == "2,3,4"
        assert report.risk > 0.0

    def test_smoothed_ragged_cell(self):
        model = LocationShiftOfBase(Uniform(0.0, 1.0), -0.3, 0.3)
        spec = EstimatorSpec(kind="smoothed")
        report = monte_carlo_risk(model, spec, 3, (4, 5, 6), 10, seed=7)
        assert math.isfinite(report.risk) and report.risk > 0.0

    def test_grid_resolution_is_converged(self):
        model = LocationShiftOfBase(Uniform(0.0, 1.0), -0.3, 0.3)
        coarse = EstimatorSpec(kind="smoothed", grid_size=2048, x_grid_size=256)
        fine = EstimatorSpec(kind="smoothed", grid_size=4096, x_grid_size=512)
        r_coarse = monte_carlo_risk(model, coarse, 5, 20, 30, seed=37)
        r_fine = monte_carlo_risk(model, fine, 5, 20, 30, seed=37)
        assert abs(r_coarse.risk - r_fine.risk) <= 0.01 * r_fine.risk

    def test_argument_validation(self):
        model = Deterministic(Uniform(0.0, 1.0))
        with pytest.raises(DomainError):
            monte_carlo_risk(model, EstimatorSpec(), 0, 5, 10, seed=1)
        with pytest.raises(DomainError):
            monte_carlo_risk(model, EstimatorSpec(), 2, 5, 0, seed=1)
        with pytest.raises(DomainError):
            monte_carlo_risk(model, EstimatorSpec(), 2, 5, 10, seed=-4)
        with pytest.raises(DomainError):
            monte_carlo_risk(model, EstimatorSpec(), 2, (3, 4, 5), 10, seed=1)


class TestRiskGrid:
    def test_cells_match_standalone_runs(self):
        model = LocationShiftOfBase(Uniform(0.0, 1.0), -0.3, 0.3)
        reports = risk_grid(model, EstimatorSpec(), [5, 10], [5, 10], 5, seed=41)
        assert len(reports) == 4
        standalone = monte_carlo_risk(
            model, EstimatorSpec(), 10, 5, 5, seed=41, cell=(1, 0)
        )
        cell = next(r for r in reports if r.n == 10 and r.sizes == 5)
        assert cell.risk == standalone.risk

    def test_progress_callback(self):
        model = Deterministic(Uniform(0.0, 1.0))
        seen = []
        risk_grid(model, EstimatorSpec(), [2], [2, 3], 2, seed=1,
                  progress=seen.append)
        assert [(r.n, r.sizes) for r in seen] == [(2, 2), (2, 3)]

    def test_risk_decreases_in_unit_count(self):
        model = LocationShiftOfBase(Uniform(0.0, 1.0), -0.3, 0.3)
        reports = risk_grid(
            model, EstimatorSpec(), [10, 30, 90], [10, 30, 90], 60, seed=43
        )
        inversions = 0
        comparisons = 0
        for p in (10, 30, 90):
            column = [r.risk for r in reports if r.sizes == p]
            for a, b in zip(column, column[1:]):
                comparisons += 1
                if not a > b:
                    inversions += 1
        assert comparisons == 6
        assert inversions <= 1

    def test_loglog_slope_is_near_minus_one(self):
        model = LocationShiftOfBase(Uniform(0.0, 1.0), -0.3, 0.3)
        ns = [10, 30, 90]
        reports = risk_grid(model, EstimatorSpec(), ns, [30], 60, seed=47)
        slope = np.polyfit(np.log(ns), np.log([r.risk for r in reports]), 1)[0]
        assert -1.35 <= slope <= -0.65


class TestRiskLogRatios:
    @staticmethod
    def _report(estimator, n, sizes, risk):
        return RiskReport(
            model="m", estimator=estimator, n=n, sizes=sizes, replications=10,
            risk=risk, se=0.0, seed=0, grid_size=64, wall_seconds=0.0,
        )

    def test_pairs_on_cells_and_logs(self):
        num = [self._report("plain", 5, 10, 0.02), self._report("plain", 10, 10, 0.01)]
        den = [self._report("smooth", 10, 10, 0.02), self._report("smooth", 5, 10, 0.01)]
        rows = risk_log_ratios(num, den)
        assert rows[0]["n"] == 5 and rows[0]["p"] == "10"
        assert rows[0]["log_ratio"] == pytest.approx(math.log(2.0), rel=1e-12)
        assert rows[1]["log_ratio"] == pytest.approx(-math.log(2.0), rel=1e-12)

    def test_missing_cell_is_an_error(self):
        num = [self._report("plain", 5, 10, 0.02)]
        den = [self._report("smooth", 6, 10, 0.02)]
        with pytest.raises(DomainError):
            risk_log_ratios(num, den)


class TestExponentialModelRoundTrip:
    def test_deterministic_exponential_matches_exact_formula(self):
        model = Deterministic(OneSidedExponential(1.0))
        report = monte_carlo_risk(model, EstimatorSpec(), 5, 6, 600, seed=53)
        exact = exact_risk_equal_p(
            RiskFormulaInput(
                n=5, sizes=6, quantile_variance=0.0,
                distribution=OneSidedExponential(1.0),
            )
        )
        assert abs(report.risk - exact) <= 4.5 * report.se
