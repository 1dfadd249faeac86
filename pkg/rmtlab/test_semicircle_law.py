"""
Unit tests for the local-law experiments
"""

import math

import numpy as np
import pytest

from rmtlab.config import load_envelopes
from rmtlab.ensembles import BERNOULLI, EnsembleSpec, draw_sample, make_moment_matched_three_point
from rmtlab.rng import seed_stream
from rmtlab.semicircle_law import (
    LocalLawRecord,
    LocalLawReport,
    bump_function,
    delocalization_report,
    fluctuation_averaging_report,
    fluctuation_averaging_sweep,
    hs_identity_check,
    hs_integral,
    local_law_errors,
    local_law_report,
    local_law_sweep,
    minor_quadratic_forms,
    rigidity_report,
    rigidity_statistics,
    rigidity_sweep,
    schur_quadratic_forms,
    smooth_cutoff,
    sup_norms_squared,
    z_second_moment_check,
    zero_function,
)
from rmtlab.spectral import classical_locations


class TestLocalLaw:
    """Tests for local_law_report and local_law_errors"""

    def test_macroscopic_regime(self) -> None:
        report = local_law_report(EnsembleSpec.goe(200), [0.3 + 10j], samples=5, seed=1)
        assert report.records[0].trace_error <= 0.02

    def test_error_shrinks_with_n(self) -> None:
        medians = []
        for n in (100, 400):
            z = complex(0.0, n ** -0.5)
            medians.append(local_law_report(EnsembleSpec.goe(n), [z], 10, seed=2).records[0])
        assert medians[1].trace_error < medians[0].trace_error
        for record in medians:
            assert record.trace_error <= 10 * record.trace_envelope

    def test_zero_matrix_diagnostic(self) -> None:
        """H = 0 gives m_N(i) = i, away from m_sc(i) = i (sqrt 5 - 1)/2"""
        errors = local_law_errors(np.zeros((4, 4)), [1j])
        gap = abs(1j - 1j * (math.sqrt(5) - 1) / 2)
        assert abs(errors[0, 2] - gap) < 1e-12
        assert errors[0, 1] == 0.0

    def test_eta_below_resolution(self) -> None:
        with pytest.raises(ValueError, match="1/N <= eta"):
            local_law_report(EnsembleSpec.goe(100), [0.5j / 100], samples=1, seed=0)

    def test_errors_nonnegative_and_envelopes(self) -> None:
        report = local_law_report(EnsembleSpec.gue(80), [0.1 + 0.2j, -1 + 1j], samples=3, seed=3)
        for record in report.records:
            assert record.diag_error >= 0 and record.offdiag_error >= 0
            assert record.entry_envelope > record.trace_envelope > 0

    def test_thread_invariance(self) -> None:
        spec = EnsembleSpec.goe(60)
        one = local_law_report(spec, [0.5j], samples=6, seed=4, threads=1)
        many = local_law_report(spec, [0.5j], samples=6, seed=4, threads=3)
        assert one.records == many.records

    def test_entry_law_universality(self) -> None:
        """Trace error at fixed z barely depends on the entry law"""
        z = [0.2 + 0.3j]
        values = []
        for entries in (BERNOULLI, make_moment_matched_three_point()):
            spec = EnsembleSpec("real_symmetric", 200, entries=entries)
            values.append(local_law_report(spec, z, samples=20, seed=5).records[0])
        gaussian = local_law_report(EnsembleSpec.goe(200), z, samples=20, seed=5).records[0]
        for record in values:
            spread = 3 * math.hypot(record.trace_error_stderr, gaussian.trace_error_stderr)
            assert abs(record.trace_error - gaussian.trace_error) <= spread + 1e-3

    def test_sweep_matches_single_runs(self) -> None:
        spec = EnsembleSpec.goe(50)
        report = local_law_sweep(spec, [50, 100], lambda n: [0.5j, complex(0.0, n ** -0.5)], 3, seed=14)
        assert [r.n for r in report.records] == [50, 50, 100, 100]
        assert report.records[3].z.imag == pytest.approx(0.1)
        single = local_law_report(spec.with_n(100), [0.5j, complex(0.0, 100 ** -0.5)], 3, seed=14)
        assert report.records[2:] == single.records
        assert np.isfinite(report.ratio_growth(1))


def synthetic_report(ratios: dict[int, float]) -> LocalLawReport:
    """Records whose trace error over envelope is the given ratio per N"""
    return LocalLawReport(
        [LocalLawRecord(n, 1j, 0.0, 0.0, ratio, 0.0, 1.0, 1.0, 1) for n, ratio in ratios.items()]
    )


class TestRatioGrowth:
    """Tests for the polylog-bounded growth of the local-law ratio across N"""

    def test_flat_ratio_is_within_slack(self) -> None:
        growth = synthetic_report({100: 0.5, 200: 0.5, 400: 0.5}).ratio_growth()
        assert growth == pytest.approx(math.log(200) / math.log(400))
        assert growth < 1.0

    def test_growing_ratio_fails(self) -> None:
        growth = synthetic_report({100: 0.5, 200: 1.5, 400: 4.5}).ratio_growth()
        assert growth == pytest.approx(3.0 * math.log(200) / math.log(400))
        assert growth > load_envelopes()["local_law_ratio_growth"]

    def test_single_n(self) -> None:
        assert synthetic_report({100: 0.5}).ratio_growth() == 0.0

    def test_goe_passes(self) -> None:
        report = local_law_sweep(
            EnsembleSpec.goe(100), [100, 200, 400], lambda n: [complex(0.0, n ** -0.5)], 40, seed=17
        )
        assert report.ratio_growth() <= load_envelopes()["local_law_ratio_growth"]


class TestRigidityAndDelocalization:
    """Tests for rigidity and delocalization reports"""

    def test_single_eigenvalue(self) -> None:
        """N = 1: gamma_1 = 0 and Q = E lambda^2 = 1"""
        report = rigidity_report(EnsembleSpec.goe(1), samples=4000, seed=6)
        q, se = report.q_mean
        assert abs(q - 1.0) < 4 * se

    def test_statistics_of_exact_locations(self) -> None:
        gammas = classical_locations(10, convention="midpoint")
        assert rigidity_statistics(gammas, gammas) == (0.0, 0.0, 0.0)

    def test_bulk_deviation(self) -> None:
        n = 300
        report = rigidity_report(EnsembleSpec.goe(n), samples=10, seed=7)
        assert report.median_middle_deviation <= 5 * math.log(n) / n
        assert np.all(report.q_values >= 0) and np.all(np.isfinite(report.max_scaled_deviation))

    def test_sign_flip_symmetry(self) -> None:
        """H and -H give the same rigidity statistics in distribution"""
        n = 100
        gammas = classical_locations(n, convention="midpoint")
        plain, flipped = [], []
        for k in range(30):
            values = np.linalg.eigvalsh(draw_sample(EnsembleSpec.goe(n), 8, k).entries)
            plain.append(rigidity_statistics(values, gammas)[0])
            flipped.append(rigidity_statistics(np.sort(-values), gammas)[0])
        assert abs(np.median(plain) - np.median(flipped)) < 0.5 * np.median(plain)

    def test_delocalized(self) -> None:
        report = delocalization_report(EnsembleSpec.goe(200), samples=5, seed=9)
        assert report.median <= 25
        assert report.min_sup_norm_squared >= 1.0 / 200 - 1e-12

    def test_localized_input(self) -> None:
        H = np.zeros((5, 5))
        H[0, 0] = 1.0
        assert np.max(sup_norms_squared(H)) == pytest.approx(1.0)

    def test_rigidity_sweep(self) -> None:
        reports, fit = rigidity_sweep(EnsembleSpec.goe(20), [20, 40, 80], samples=4, seed=15)
        assert [r.n for r in reports] == [20, 40, 80]
        assert fit.low <= fit.slope <= fit.high
        assert np.isfinite(fit.slope)


class TestFluctuationAveraging:
    """Tests for the Z_i quadratic forms"""

    def test_schur_matches_minors(self) -> None:
        for symmetry in ("real_symmetric", "complex_hermitian"):
            H = draw_sample(EnsembleSpec(symmetry, 30), 10, 0)
            z = 0.3 + 0.2j
            fast = schur_quadratic_forms(H, z)
            slow = minor_quadratic_forms(H, z)
            assert np.max(np.abs(fast - slow)) < 1e-9, f"{symmetry} mismatch"

    def test_averaging_beats_individual(self) -> None:
        record = fluctuation_averaging_report(EnsembleSpec.goe(100), 0.1j, samples=10, seed=11)
        assert record.median_averaged < record.median_individual

    def test_z_is_centered(self) -> None:
        record = fluctuation_averaging_report(EnsembleSpec.goe(60), 0.5j, samples=40, seed=12)
        assert abs(record.z_mean) <= 4 * record.z_mean_stderr + 1e-3

    def test_eta_precondition(self) -> None:
        with pytest.raises(ValueError, match="eta >= 1/N"):
            fluctuation_averaging_report(EnsembleSpec.goe(50), 0.001j, samples=1, seed=0)

    def test_sweep_uses_eta_of_n(self) -> None:
        records, slope_a, slope_b = fluctuation_averaging_sweep(
            EnsembleSpec.goe(40), [40, 80, 160], lambda n: n ** -0.5, samples=4, seed=16
        )
        assert [r.n for r in records] == [40, 80, 160]
        assert [r.z.imag for r in records] == pytest.approx([40 ** -0.5, 80 ** -0.5, 160 ** -0.5])
        assert slope_a.contains(slope_a.slope) and slope_b.contains(slope_b.slope)

    @pytest.mark.parametrize("symmetry", ["real_symmetric", "complex_hermitian"])
    def test_second_moment_formula(self, symmetry: str) -> None:
        spec = EnsembleSpec(symmetry, 20, entries=BERNOULLI)
        H = draw_sample(spec, 13, 0)
        check = z_second_moment_check(H, 3, 0.2 + 0.5j, 20_000, seed_stream(13, 0, "row"))
        assert check.z_score < 4, f"MC {check.monte_carlo:.5f} vs exact {check.exact:.5f}"

    def test_second_moment_size_limit(self) -> None:
        H = draw_sample(EnsembleSpec.goe(61), 0, 0)
        with pytest.raises(ValueError, match="N <= 60"):
            z_second_moment_check(H, 0, 1j, 10, np.random.default_rng(0))


class TestHelfferSjostrand:
    """Tests for the Helffer–Sjöstrand quadrature"""

    def test_cutoff_shape(self) -> None:
        chi = smooth_cutoff()
        y = np.array([0.0, 0.3, 0.5, 0.75, 1.0, 1.2])
        values = chi.value(y)
        assert np.allclose(values[:3], 1.0) and values[4] == 0.0 and values[5] == 0.0
        assert 0.0 < values[3] < 1.0

    def test_cutoff_derivative(self) -> None:
        chi = smooth_cutoff()
        y = np.linspace(0.55, 0.95, 9)
        h = 1e-6
        numeric = (chi.value(y + h) - chi.value(y - h)) / (2 * h)
        assert np.allclose(chi.derivative(y), numeric, atol=1e-6)

    def test_bump_at_center(self) -> None:
        result = hs_identity_check(bump_function(), 0.0)
        assert result.residual <= 1e-6

    def test_fixed_grid(self) -> None:
        value = hs_integral(bump_function(), 0.0, smooth_cutoff(), 400)
        assert abs(value - 1.0) <= 1e-4

    def test_off_center(self) -> None:
        fn = bump_function()
        result = hs_identity_check(fn, 0.37)
        assert abs(result.target - (1 - 0.37**2) ** 3) < 1e-15
        assert result.residual <= 1e-6

    def test_outside_support(self) -> None:
        result = hs_identity_check(bump_function(), 5.0)
        assert abs(result.value) <= 1e-6

    def test_zero_function(self) -> None:
        assert hs_integral(zero_function(), 0.0, smooth_cutoff(), 50) == 0.0

    def test_non_convergence(self) -> None:
        with pytest.raises(RuntimeError, match="did not converge"):
            hs_identity_check(bump_function(), 0.0, tol=0.0, n_start=10, n_max=20)
