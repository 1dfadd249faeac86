"""
Unit tests for spectral statistics
"""

import numpy as np
import pytest
from scipy import integrate

from rmtlab.ensembles import EnsembleSpec, sample_wigner
from rmtlab.rng import seed_stream
from rmtlab.spectral import SEMICIRCLE, classical_locations, eigen
from rmtlab.stats import (
    GAP_RATIO_GOE,
    GAP_RATIO_POISSON,
    GapHistogram,
    ScaledLaw,
    UniformLaw,
    correlation_sup_difference,
    edge_statistic,
    fit_loglog_slope,
    gap_histogram,
    gap_ratio_statistic,
    ks_distance,
    median_stderr,
    poisson_spectrum,
    pool_gaps,
    split_half_ks,
    surmise_sup_distance,
    two_point_window_correlation,
    unfold,
    wigner_surmise_cdf,
    wigner_surmise_pdf,
)


def goe_spectra(n: int, count: int, seed: int = 77) -> list[np.ndarray]:
    spec = EnsembleSpec.goe(n)
    return [
        eigen(sample_wigner(spec, seed_stream(seed, k, "entries"))).eigenvalues
        for k in range(count)
    ]


class TestUnfold:
    """Tests for unfold"""

    def test_classical_locations_unfold_to_one(self) -> None:
        gaps = unfold(classical_locations(1000), window=(0.0, 1.0))
        assert np.max(np.abs(gaps.gaps - 1.0)) < 0.02

    def test_goe_mean_gap(self) -> None:
        gaps = pool_gaps(unfold(values) for values in goe_spectra(1000, 4))
        assert abs(gaps.mean - 1.0) < 0.03, f"Mean unfolded gap {gaps.mean:.4f}"
        assert np.all(gaps.gaps >= 0)

    def test_window_outside_support(self) -> None:
        with pytest.raises(ValueError, match="not inside the bulk"):
            unfold(classical_locations(100), window=(2.5, 0.2))

    def test_empty_window(self) -> None:
        with pytest.raises(ValueError, match="Empty window"):
            unfold(np.array([-1.0, 1.5]), window=(0.0, 0.5))

    def test_affine_covariance(self) -> None:
        """Scaling eigenvalues and the law by c leaves gaps unchanged"""
        values = goe_spectra(200, 1)[0]
        c = 2.5
        plain = unfold(values, window=(0.0, 0.5))
        scaled = unfold(c * values, law=ScaledLaw(SEMICIRCLE, c), window=(0.0, c * 0.5))
        assert np.allclose(plain.gaps, scaled.gaps, rtol=1e-12)


class TestGapHistogram:
    """Tests for gap histograms and the Wigner surmise"""

    def test_surmise_normalization(self) -> None:
        for beta_class in (1, 2):
            total, _ = integrate.quad(lambda s: wigner_surmise_pdf(s, beta_class), 0, np.inf, epsabs=1e-13)
            mean, _ = integrate.quad(lambda s: s * wigner_surmise_pdf(s, beta_class), 0, np.inf, epsabs=1e-13)
            assert abs(total - 1.0) < 1e-10 and abs(mean - 1.0) < 1e-10

    def test_surmise_at_zero(self) -> None:
        assert wigner_surmise_pdf(0.0) == 0.0

    def test_surmise_cdf_matches_pdf(self) -> None:
        for beta_class in (1, 2):
            for s in (0.3, 1.0, 2.2):
                integral, _ = integrate.quad(lambda t: wigner_surmise_pdf(t, beta_class), 0, s, epsabs=1e-14)
                assert abs(wigner_surmise_cdf(s, beta_class) - integral) < 1e-12

    def test_negative_spacing(self) -> None:
        with pytest.raises(ValueError, match="non-negative"):
            wigner_surmise_pdf(-0.1)

    def test_histogram_integrates_to_one(self) -> None:
        gaps = pool_gaps(unfold(values) for values in goe_spectra(500, 5))
        hist = gap_histogram(gaps, bins=30)
        assert abs(np.sum(hist.density * hist.widths) - 1.0) < 1e-8

    def test_too_few_gaps(self) -> None:
        gaps = unfold(classical_locations(200))
        with pytest.raises(ValueError, match="Too few gaps"):
            gap_histogram(gaps)

    def test_poisson_has_no_repulsion(self) -> None:
        """iid points put the most spacing mass near zero"""
        rng = np.random.default_rng(3)
        law = UniformLaw(-1.0, 1.0)
        gaps = pool_gaps(
            unfold(poisson_spectrum(1000, rng), law=law, window=(0.0, 0.8)) for _ in range(3)
        )
        hist = gap_histogram(gaps, bins=20)
        assert np.argmax(hist.density) == 0

    def test_gue_repels_more_than_goe(self) -> None:
        goe = pool_gaps(unfold(v) for v in goe_spectra(400, 10))
        spec = EnsembleSpec.gue(400)
        gue = pool_gaps(
            unfold(eigen(sample_wigner(spec, seed_stream(5, k, "entries"))))
            for k in range(10)
        )
        assert np.mean(gue.gaps < 0.3) < np.mean(goe.gaps < 0.3)

    def test_sup_distance_of_exact_bins(self) -> None:
        edges = np.linspace(0.0, 4.0, 21)
        density = np.diff(wigner_surmise_cdf(edges)) / np.diff(edges)
        hist = GapHistogram(edges, density, np.zeros(20), 1000)
        assert surmise_sup_distance(hist) < 1e-12

    def test_sup_distance_separates_goe_from_poisson(self) -> None:
        goe = gap_histogram(pool_gaps(unfold(v) for v in goe_spectra(500, 10)), bins=20)
        rng = np.random.default_rng(4)
        law = UniformLaw(-1.0, 1.0)
        poisson = gap_histogram(
            pool_gaps(unfold(poisson_spectrum(1000, rng), law=law, window=(0.0, 0.8)) for _ in range(3)),
            bins=20,
        )
        assert surmise_sup_distance(poisson) > 0.3
        assert surmise_sup_distance(goe) < surmise_sup_distance(poisson)


class TestGapRatio:
    """Tests for the unfolding-free gap ratio"""

    def test_goe_ratio(self) -> None:
        ratios = [gap_ratio_statistic(v) for v in goe_spectra(400, 10)]
        assert abs(np.mean(ratios) - GAP_RATIO_GOE) < 0.02

    def test_poisson_ratio(self) -> None:
        rng = np.random.default_rng(4)
        ratios = [gap_ratio_statistic(poisson_spectrum(2000, rng)) for _ in range(10)]
        assert abs(np.mean(ratios) - GAP_RATIO_POISSON) < 0.02


class TestTwoPoint:
    """Tests for the averaged two-point correlation"""

    def test_poisson_is_flat(self) -> None:
        rng = np.random.default_rng(11)
        law = UniformLaw(-1.0, 1.0)
        spectra = [poisson_spectrum(500, rng) for _ in range(60)]
        corr = two_point_window_correlation(spectra, E=0.0, b=0.4, law=law, bins=6)
        assert np.max(np.abs(corr.values - 1.0)) < 0.1

    def test_goe_repulsion_at_short_range(self) -> None:
        corr = two_point_window_correlation(goe_spectra(200, 50), E=0.0, b=0.4, bins=10)
        assert corr.values[0] < 0.5 and abs(corr.values[-1] - 1.0) < 0.25

    def test_split_half_self_consistency(self) -> None:
        spectra = goe_spectra(200, 100, seed=12)
        a = two_point_window_correlation(spectra[0::2], b=0.4, bins=6)
        b = two_point_window_correlation(spectra[1::2], b=0.4, bins=6)
        assert correlation_sup_difference(a, b) < 0.15

    def test_too_few_spectra(self) -> None:
        with pytest.raises(ValueError, match="Too few spectra"):
            two_point_window_correlation(goe_spectra(100, 10))

    def test_window_too_narrow(self) -> None:
        with pytest.raises(ValueError, match="Window too narrow"):
            two_point_window_correlation(goe_spectra(100, 50), b=0.05)


class TestEdgeAndDistances:
    """Tests for edge statistics, KS distance and slope fits"""

    def test_edge_centering(self) -> None:
        values = np.linspace(-2.0, 2.0, 200)
        assert edge_statistic([values]).values[0] == 0.0

    def test_edge_equivariance(self) -> None:
        values = goe_spectra(150, 1)[0]
        delta = 0.013
        base = edge_statistic([values]).values[0]
        shifted = edge_statistic([values + delta]).values[0]
        assert abs(shifted - base - 150 ** (2 / 3) * delta) < 1e-12

    def test_second_largest(self) -> None:
        values = np.append(np.linspace(-2.0, 2.0, 199), 10.0)
        assert edge_statistic([values], which="second_largest").values[0] == 0.0

    def test_edge_small_n(self) -> None:
        with pytest.raises(ValueError, match="N >= 100"):
            edge_statistic([np.zeros(50)])

    def test_ks_identical_and_disjoint(self) -> None:
        a = np.arange(10.0)
        assert ks_distance(a, a) == 0.0
        assert ks_distance(a, a + 100.0) == 1.0

    def test_ks_uniform_null(self) -> None:
        rng = np.random.default_rng(9)
        assert ks_distance(rng.random(10_000), rng.random(10_000)) < 0.03

    def test_ks_symmetry_and_triangle(self) -> None:
        rng = np.random.default_rng(10)
        for _ in range(100):
            a, b, c = (rng.normal(rng.normal(), 1.0, 30) for _ in range(3))
            assert ks_distance(a, b) == ks_distance(b, a)
            assert ks_distance(a, c) <= ks_distance(a, b) + ks_distance(b, c) + 1e-15

    def test_ks_empty(self) -> None:
        with pytest.raises(ValueError, match="non-empty"):
            ks_distance([], [1.0])

    def test_split_half_ks_small(self) -> None:
        rng = np.random.default_rng(2)
        assert split_half_ks(rng.normal(size=4000)) < 0.06

    def test_loglog_slope(self) -> None:
        x = np.array([1.0, 2.0, 4.0, 8.0])
        fit = fit_loglog_slope(x, 3.0 * x**-1.5)
        assert abs(fit.slope + 1.5) < 1e-12 and fit.contains(-1.5)

    def test_median_stderr(self) -> None:
        med, se = median_stderr(np.random.default_rng(0).normal(size=10_000))
        assert abs(med) < 0.05 and 0.005 < se < 0.02
