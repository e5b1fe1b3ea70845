import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import ndtr

from qsync import (
    BoundaryKernelMeasure,
    CustomKernel,
    GaussianKernel,
    KernelDensityMeasure,
    least_squares_cv_score,
    select_bandwidth,
    smoothed_unit_measure,
    smoothing_error_bound,
    validate_kernel,
)
from qsync.errors import DegenerateSampleError, DomainError, InvariantViolation

from _oracles import w2_sample_to_smooth


def seeded_pairs(count, rng):
    """Random (center, bandwidth) boundary-kernel configurations."""
    for _ in range(count):
        yield float(rng.uniform(0.0, 1.0)), float(rng.uniform(0.01, 0.25))


class TestBoundaryWeights:
    def test_match_direct_formulas(self):
        rng = np.random.default_rng(71)
        for y, h in seeded_pairs(20, rng):
            m = BoundaryKernelMeasure(y, h)
            assert m.b1 == pytest.approx(1.0 - ndtr((1.0 - y) / h), abs=1e-14)
            assert m.b2 == pytest.approx(ndtr(-y / h), abs=1e-14)
            assert 0.0 <= m.b1 <= 0.5
            assert 0.0 <= m.b2 <= 0.5

    def test_interior_center_has_negligible_correction(self):
        m = BoundaryKernelMeasure(0.5, 0.05)
        assert m.b1 < 1e-20 and m.b2 < 1e-20
        for x in (0.35, 0.5, 0.65):
            assert float(m.cdf(x)) == pytest.approx(ndtr((x - 0.5) / 0.05), abs=1e-12)


class TestBoundaryMeasure:
    def test_cdf_endpoints(self):
        rng = np.random.default_rng(73)
        for y, h in seeded_pairs(20, rng):
            m = BoundaryKernelMeasure(y, h)
            assert float(m.cdf(0.0)) == pytest.approx(0.0, abs=1e-12)
            assert float(m.cdf(1.0)) == pytest.approx(1.0, abs=1e-12)

    def test_density_integrates_to_one(self):
        rng = np.random.default_rng(79)
        for y, h in seeded_pairs(10, rng):
            m = BoundaryKernelMeasure(y, h)
            mass, err = quad(lambda x: float(m.pdf(x)), 0.0, 1.0,
                             points=[y], limit=200)
            assert abs(mass - 1.0) <= 1e-10

    def test_closed_cdf_matches_cumulative_quadrature(self):
        rng = np.random.default_rng(83)
        for y, h in seeded_pairs(8, rng):
            m = BoundaryKernelMeasure(y, h)
            for x in rng.uniform(0.0, 1.0, size=4):
                target, _ = quad(lambda u: float(m.pdf(u)), 0.0, float(x),
                                 points=[y] if y < x else None, limit=200)
                assert float(m.cdf(x)) == pytest.approx(target, abs=1e-9)

    def test_cdf_is_monotone(self):
        m = BoundaryKernelMeasure(0.15, 0.2)
        xs = np.linspace(0.0, 1.0, 501)
        values = np.asarray(m.cdf(xs))
        assert np.all(np.diff(values) >= -1e-14)

    def test_quantile_roundtrip(self):
        rng = np.random.default_rng(89)
        for y, h in seeded_pairs(6, rng):
            m = BoundaryKernelMeasure(y, h)
            for alpha in (0.05, 0.3, 0.5, 0.9):
                assert float(m.cdf(m.quantile(alpha))) == pytest.approx(alpha, abs=1e-10)

    def test_quantile_against_bisection_oracle(self):
        m = BoundaryKernelMeasure(0.1, 0.1)
        for alpha in (0.2, 0.5, 0.8):
            oracle = brentq(lambda x: float(m.cdf(x)) - alpha, 0.0, 1.0, xtol=1e-13)
            assert m.quantile(alpha) == pytest.approx(oracle, abs=1e-10)


class TestSmoothedUnit:
    def test_single_sample_is_one_boundary_kernel(self):
        unit = smoothed_unit_measure([0.3], 0.08)
        single = BoundaryKernelMeasure(0.3, 0.08)
        xs = np.linspace(0.0, 1.0, 41)
        assert np.allclose(unit.cdf(xs), single.cdf(xs), atol=1e-14)
        assert np.allclose(unit.pdf(xs), single.pdf(xs), atol=1e-12)

    def test_symmetric_sample_has_median_half(self):
        unit = smoothed_unit_measure([0.2, 0.8], 0.1)
        assert float(unit.cdf(0.5)) == pytest.approx(0.5, abs=1e-14)

    def test_mixture_of_kernels(self):
        samples = [0.2, 0.6, 0.9]
        unit = smoothed_unit_measure(samples, 0.07)
        parts = [BoundaryKernelMeasure(y, 0.07) for y in samples]
        for x in (0.1, 0.45, 0.95):
            expect = np.mean([float(p.cdf(x)) for p in parts])
            assert float(unit.cdf(x)) == pytest.approx(expect, abs=1e-14)

    def test_requires_unit_interval(self):
        with pytest.raises(DomainError):
            smoothed_unit_measure([0.2, 1.4], 0.1)
        with pytest.raises(DomainError):
            BoundaryKernelMeasure(-0.1, 0.1)

    def test_quantile_table_tracks_exact_quantiles(self):
        rng = np.random.default_rng(97)
        samples = rng.uniform(0.05, 0.95, size=9)
        unit = smoothed_unit_measure(samples, 0.09)
        alphas = np.linspace(0.02, 0.98, 49)
        table = unit.quantile_table(alphas, x_grid_size=4096)
        exact = np.array([unit.quantile(a) for a in alphas])
        assert np.max(np.abs(table - exact)) <= 1e-3


class TestSmoothingErrorBound:
    def test_formula(self):
        k = GaussianKernel()
        for h in (0.25, 0.1, 0.05, 0.01):
            expect = 3.0 * h * h + 4.0 * float(k.cdf(-1.0 / math.sqrt(h)))
            assert smoothing_error_bound(h) == pytest.approx(expect, rel=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            smoothing_error_bound(0.0)
        with pytest.raises(DomainError):
            smoothing_error_bound(0.3)

    def test_bound_dominates_actual_smoothing_distance(self):
        rng = np.random.default_rng(101)
        for _ in range(25):
            p = int(rng.integers(2, 20))
            samples = rng.uniform(0.0, 1.0, size=p)
            for h in (0.25, 0.1, 0.05, 0.01):
                unit = smoothed_unit_measure(samples, h)
                d2 = w2_sample_to_smooth(samples, unit)
                assert d2 <= smoothing_error_bound(h) + 1e-9

    def test_distance_shrinks_quadratically(self):
        rng = np.random.default_rng(103)
        samples = rng.uniform(0.0, 1.0, size=8)
        for h in (0.05, 0.02, 0.01, 0.005):
            unit = smoothed_unit_measure(samples, h)
            d2 = w2_sample_to_smooth(samples, unit)
            assert d2 <= 3.1 * h * h


class TestBandwidthSelection:
    @staticmethod
    def step_quantile(x, q):
        ordered = np.sort(x)
        j = max(int(math.ceil(q * ordered.size)), 1)
        return float(ordered[j - 1])

    def silverman_oracle(self, x):
        x = np.asarray(x, dtype=float)
        sd = x.std(ddof=1)
        iqr = self.step_quantile(x, 0.75) - self.step_quantile(x, 0.25)
        spreads = [s for s in (sd, iqr / 1.34) if s > 0.0]
        return 0.9 * min(spreads) * x.size ** (-0.2)

    def test_two_point_sample_closed_form(self):
        h = select_bandwidth([0.0, 1.0])
        sd = math.sqrt(0.5)  # ddof=1 on {0,1}
        expect = 0.9 * min(sd, 1.0 / 1.34) * 2.0 ** (-0.2)
        assert h == pytest.approx(expect, rel=1e-12)

    def test_matches_oracle_on_random_samples(self):
        rng = np.random.default_rng(107)
        for _ in range(20):
            x = rng.uniform(size=int(rng.integers(2, 120)))
            assert select_bandwidth(x) == pytest.approx(self.silverman_oracle(x), rel=1e-12)

    def test_zero_iqr_falls_back_to_sd(self):
        x = np.array([0.0, 0.0, 0.0, 0.0, 1.0])
        expect = 0.9 * x.std(ddof=1) * 5.0 ** (-0.2)
        assert select_bandwidth(x) == pytest.approx(expect, rel=1e-12)

    def test_identical_samples_are_degenerate(self):
        with pytest.raises(DegenerateSampleError):
            select_bandwidth([0.4, 0.4, 0.4])
        with pytest.raises(DomainError):
            select_bandwidth([0.4])

    def test_unknown_rule(self):
        with pytest.raises(DomainError):
            select_bandwidth([0.1, 0.9], rule="magic")

    def test_cv_score_matches_numeric_oracle(self):
        rng = np.random.default_rng(109)
        x = rng.uniform(size=12)
        p = x.size
        for h in (0.05, 0.15, 0.4):
            kde = KernelDensityMeasure(x, h, GaussianKernel())
            integral_sq, _ = quad(
                lambda u: float(
                    np.mean(np.exp(-0.5 * ((u - x) / h) ** 2))
                    / (h * math.sqrt(2.0 * math.pi))
                )
                ** 2,
                -3.0,
                4.0,
                limit=300,
            )
            loo = 0.0
            for i in range(p):
                others = np.delete(x, i)
                loo += float(
                    np.mean(
                        np.exp(-0.5 * ((x[i] - others) / h) ** 2)
                        / (h * math.sqrt(2.0 * math.pi))
                    )
                )
            loo /= p
            oracle = integral_sq - 2.0 * loo
            assert least_squares_cv_score(x, h) == pytest.approx(oracle, abs=1e-8)
            assert kde is not None

    def test_cv_picks_the_grid_argmin(self):
        rng = np.random.default_rng(113)
        x = rng.beta(2.0, 3.0, size=30)
        picked = select_bandwidth(x, rule="cv")
        silverman = select_bandwidth(x)
        candidates = silverman * np.geomspace(0.125, 4.0, 16)
        scores = [least_squares_cv_score(x, float(h)) for h in candidates]
        assert picked == pytest.approx(float(candidates[int(np.argmin(scores))]), rel=1e-12)


class TestPlainKernelDensity:
    def test_cdf_is_kernel_average(self):
        rng = np.random.default_rng(127)
        x = rng.normal(size=7)
        kde = KernelDensityMeasure(x, 0.3, GaussianKernel())
        for u in (-1.0, 0.2, 2.5):
            assert float(kde.cdf(u)) == pytest.approx(
                float(np.mean(ndtr((u - x) / 0.3))), abs=1e-14
            )

    def test_quantile_roundtrip(self):
        rng = np.random.default_rng(131)
        kde = KernelDensityMeasure(rng.normal(size=9), 0.25, GaussianKernel())
        for alpha in (0.05, 0.5, 0.95):
            assert float(kde.cdf(kde.quantile(alpha))) == pytest.approx(alpha, abs=1e-10)

    def test_quantile_table_tracks_exact(self):
        rng = np.random.default_rng(137)
        kde = KernelDensityMeasure(rng.normal(size=11), 0.35, GaussianKernel())
        alphas = np.linspace(0.02, 0.98, 33)
        table = kde.quantile_table(alphas, x_grid_size=4096)
        exact = np.array([kde.quantile(a) for a in alphas])
        assert np.max(np.abs(table - exact)) <= 2e-3


class TestKernelValidation:
    def test_gaussian_kernel_passes(self):
        validate_kernel(GaussianKernel())

    def test_asymmetric_kernel_fails(self):
        bad = CustomKernel(
            density=lambda x: np.exp(-0.5 * (np.asarray(x) - 0.3) ** 2)
            / math.sqrt(2.0 * math.pi),
            cumulative=lambda x: ndtr(np.asarray(x) - 0.3),
        )
        with pytest.raises(InvariantViolation):
            validate_kernel(bad)

    def test_wrong_mass_fails(self):
        bad = CustomKernel(
            density=lambda x: 0.5
            * np.exp(-0.5 * np.asarray(x) ** 2)
            / math.sqrt(2.0 * math.pi),
            cumulative=lambda x: 0.5 * ndtr(np.asarray(x)),
        )
        with pytest.raises(InvariantViolation):
            validate_kernel(bad)

    def test_wrong_second_moment_fails(self):
        bad = CustomKernel(
            density=lambda x: np.exp(-0.5 * (np.asarray(x) / 2.0) ** 2)
            / (2.0 * math.sqrt(2.0 * math.pi)),
            cumulative=lambda x: ndtr(np.asarray(x) / 2.0),
        )
        with pytest.raises(InvariantViolation):
            validate_kernel(bad)

    def test_heavy_tail_fails(self):
        # Cauchy-like tails decay too slowly for the tail condition.
        bad = CustomKernel(
            density=lambda x: 1.0 / (math.pi * (1.0 + np.asarray(x) ** 2)),
            cumulative=lambda x: 0.5 + np.arctan(np.asarray(x)) / math.pi,
            tail_exponent=2.0,
        )
        with pytest.raises(InvariantViolation):
            validate_kernel(bad)

    def test_rescaled_triangular_kernel_passes(self):
        a = math.sqrt(6.0)  # triangular on [-a, a] has unit variance

        def density(x):
            x = np.asarray(x, dtype=float)
            return np.clip(1.0 - np.abs(x) / a, 0.0, None) / a

        def cumulative(x):
            x = np.asarray(x, dtype=float)
            xx = np.clip(x, -a, a)
            return np.where(
                xx < 0.0,
                0.5 * (1.0 + xx / a) ** 2,
                1.0 - 0.5 * (1.0 - xx / a) ** 2,
            )

        kernel = CustomKernel(density=density, cumulative=cumulative)
        validate_kernel(kernel)

    def test_rescale_normalizes_a_raw_shape(self):
        # Raw N(0, 2) density: wrong variance until rescale=True fixes it.
        raw = lambda x: np.exp(-0.25 * np.asarray(x, dtype=float) ** 2)
        kernel = CustomKernel(
            density=raw,
            cumulative=lambda x: ndtr(np.asarray(x) / math.sqrt(2.0)),
            rescale=True,
        )
        mass, _ = quad(lambda u: float(kernel.pdf(u)), -40.0, 40.0, limit=300)
        second, _ = quad(lambda u: u * u * float(kernel.pdf(u)), -40.0, 40.0, limit=300)
        assert mass == pytest.approx(1.0, abs=1e-8)
        assert second == pytest.approx(1.0, abs=1e-7)

    def test_boundary_measure_accepts_custom_kernel(self):
        a = math.sqrt(6.0)

        def density(x):
            x = np.asarray(x, dtype=float)
            return np.clip(1.0 - np.abs(x) / a, 0.0, None) / a

        def cumulative(x):
            x = np.asarray(x, dtype=float)
            xx = np.clip(x, -a, a)
            return np.where(
                xx < 0.0,
                0.5 * (1.0 + xx / a) ** 2,
                1.0 - 0.5 * (1.0 - xx / a) ** 2,
            )

        kernel = CustomKernel(density=density, cumulative=cumulative)
        m = BoundaryKernelMeasure(0.4, 0.1, kernel)
        assert float(m.cdf(0.0)) == pytest.approx(0.0, abs=1e-12)
        assert float(m.cdf(1.0)) == pytest.approx(1.0, abs=1e-12)
        mass, _ = quad(lambda x: float(m.pdf(x)), 0.0, 1.0, points=[0.4], limit=200)
        assert mass == pytest.approx(1.0, abs=1e-9)
