"""
Unit tests for Green function comparison
"""

import math
from typing import Optional

import numpy as np
import pytest

import rmtlab.compare
from rmtlab.compare import (
    compare_differences,
    comparison_decay,
    coupled_matrices,
    moment_gap,
    ou_matching_check,
    rank2_update,
    swap_experiment,
    swap_schedule,
)
from rmtlab.config import config_from_mapping
from rmtlab.ensembles import BERNOULLI, GAUSSIAN, UNIFORM, EntryDistribution, make_moment_matched_three_point
from rmtlab.harness import run
from rmtlab.rng import seed_stream
from rmtlab.spectral import green_function


class TestMomentGap:
    """Tests for moment_gap and ou_matching_check"""

    def test_four_moment_pair(self) -> None:
        gap = moment_gap(GAUSSIAN, make_moment_matched_three_point())
        assert max(gap.gaps) < 1e-12
        assert gap.matching_order == 4

    def test_three_moment_pair(self) -> None:
        gap = moment_gap(GAUSSIAN, BERNOULLI)
        assert gap.gaps == (0.0, 0.0, 0.0, 2.0)
        assert gap.matching_order == 3

    def test_self(self) -> None:
        assert moment_gap(UNIFORM, UNIFORM).gaps == (0.0, 0.0, 0.0, 0.0)

    def test_not_standardized(self) -> None:
        shifted = EntryDistribution("custom_discrete", atoms=((0.0, 0.5), (2.0, 0.5)))
        with pytest.raises(ValueError, match="standardized"):
            moment_gap(GAUSSIAN, shifted)

    def test_ou_time_zero(self) -> None:
        check = ou_matching_check(BERNOULLI, 0.0)
        assert check.gaps == (0.0, 0.0, 0.0, 0.0)
        assert check.matching_order == 4

    def test_ou_bernoulli(self) -> None:
        n = 1000
        t = 1.0 / n
        check = ou_matching_check(BERNOULLI, t)
        assert check.gaps[0] == 0.0 and check.gaps[1] < 1e-14 and check.gaps[2] == 0.0
        assert abs(check.gaps[3] - 2.0 * (1.0 - math.exp(-2.0 * t))) < 1e-14
        assert check.satisfies(n, 0.75)
        assert not check.satisfies(n, 1.0)

    def test_ou_first_moments_fixed(self) -> None:
        for t in (0.01, 0.5, 3.0):
            gaps = ou_matching_check(UNIFORM, t).gaps
            assert gaps[0] < 1e-15 and gaps[1] < 1e-14

    def test_ou_negative_time(self) -> None:
        with pytest.raises(ValueError, match="non-negative"):
            ou_matching_check(BERNOULLI, -1.0)


class TestRank2Update:
    """Tests for rank2_update"""

    @pytest.mark.parametrize("symmetry", ["real_symmetric", "complex_hermitian"])
    def test_matches_inversion(self, symmetry: str) -> None:
        n = 50
        rng = np.random.default_rng(0)
        H, _ = coupled_matrices(GAUSSIAN, GAUSSIAN, n, rng, symmetry)
        H = H.astype(complex)
        z = 0.3 + 0.1j
        G = green_function(H, z)
        for _ in range(100):
            i, j = sorted(rng.integers(0, n, size=2))
            if i == j:
                delta: complex = rng.normal() / math.sqrt(n)
            else:
                delta = complex(rng.normal(), rng.normal() if symmetry == "complex_hermitian" else 0.0) / math.sqrt(n)
            H[i, j] += delta
            if i != j:
                H[j, i] += np.conj(delta)
            updated = rank2_update(G, int(i), int(j), delta)
            assert updated is not None
            G = updated
        assert np.max(np.abs(G - green_function(H, z))) < 1e-8

    def test_degenerate_returns_none(self) -> None:
        G = green_function(np.zeros((3, 3)), 1j)
        assert rank2_update(G, 0, 1, 0.5, tol=10.0) is None

    def test_zero_change(self) -> None:
        G = green_function(np.eye(4), 0.5j)
        assert np.array_equal(rank2_update(G, 1, 2, 0.0), G)


class TestSchedule:
    """Tests for swap_schedule and coupled_matrices"""

    def test_bijective(self) -> None:
        n = 7
        for kind in ("lexicographic", "random"):
            pairs = swap_schedule(n, kind, np.random.default_rng(1))
            assert len(pairs) == n * (n + 1) // 2
            assert np.all(pairs[:, 0] <= pairs[:, 1])
            assert len({(int(i), int(j)) for i, j in pairs}) == len(pairs)

    def test_random_needs_stream(self) -> None:
        with pytest.raises(ValueError, match="random stream"):
            swap_schedule(5, "random")

    def test_quantile_coupling(self) -> None:
        hv, hw = coupled_matrices(GAUSSIAN, BERNOULLI, 30, np.random.default_rng(2))
        assert np.array_equal(np.sign(hv), np.sign(hw))
        assert np.allclose(np.abs(hw), 1.0 / math.sqrt(30))

    def test_complex_is_hermitian(self) -> None:
        hv, hw = coupled_matrices(GAUSSIAN, UNIFORM, 20, np.random.default_rng(3), "complex_hermitian")
        for H in (hv, hw):
            assert np.array_equal(H, H.conj().T)


class TestSwapExperiment:
    """Tests for swap_experiment"""

    def test_telescoping(self) -> None:
        n, z = 20, 0.2 + 0.5j
        trace = swap_experiment(GAUSSIAN, BERNOULLI, n, z, samples=4, seed=3)
        assert trace.telescoping_error <= 1e-10
        assert trace.checkpoints[0] == 0 and trace.checkpoints[-1] == n * (n + 1) // 2
        assert trace.update_drift < 1e-8
        for k in range(trace.samples):
            hv, hw = coupled_matrices(GAUSSIAN, BERNOULLI, n, seed_stream(3, k, f"compare/{n}"))
            m_v = np.trace(green_function(hv, z)) / n
            m_w = np.trace(green_function(hw, z)) / n
            assert abs(trace.values[k, 0] - m_v) < 1e-12
            assert abs(trace.values[k, -1] - m_w) < 1e-12
            assert abs(np.sum(trace.increments[k]) - (m_w - m_v)) < 1e-10

    def test_corrupted_trace_breaks_telescoping(self) -> None:
        trace = swap_experiment(GAUSSIAN, BERNOULLI, 20, 0.2 + 0.5j, samples=3, seed=3)
        trace.values[:, 1:-1] += 1e3
        trace.values[:, -1] += 5.0
        assert trace.telescoping_error > 1.0

    def test_chain_starts_at_inverted_value(self) -> None:
        trace = swap_experiment(GAUSSIAN, BERNOULLI, 12, 0.5j, samples=2, seed=12)
        assert trace.chain_values.shape == trace.values.shape
        assert np.array_equal(trace.chain_values[:, 0], trace.values[:, 0])
        assert np.max(np.abs(trace.chain_values - trace.values)) <= trace.update_drift

    def test_identical_laws(self) -> None:
        trace = swap_experiment(UNIFORM, UNIFORM, 15, 1j, samples=5, seed=4)
        assert trace.difference() == (0.0, 0.0)
        independent = swap_experiment(UNIFORM, UNIFORM, 15, 1j, samples=60, seed=4, coupling="independent")
        diff, se = independent.difference()
        assert diff <= 4 * se

    def test_three_moment_envelope(self) -> None:
        n = 40
        trace = swap_experiment(GAUSSIAN, BERNOULLI, n, 1j, samples=100, seed=5)
        assert trace.difference()[0] <= 5.0 / n

    def test_four_moments_beat_three(self) -> None:
        n, z = 40, 1j
        four = swap_experiment(GAUSSIAN, make_moment_matched_three_point(), n, z, samples=300, seed=6)
        three = swap_experiment(GAUSSIAN, BERNOULLI, n, z, samples=300, seed=6)
        assert four.difference()[0] < three.difference()[0]
        _, passed = compare_differences(four, three)
        assert passed

    def test_product_observable(self) -> None:
        trace = swap_experiment(GAUSSIAN, BERNOULLI, 12, 0.5j, samples=3, seed=7, z2=-0.3 + 0.5j)
        assert trace.products is not None
        assert np.all(np.abs(trace.products) <= 4.0)
        n, z2 = 12, -0.3 + 0.5j
        hv, _ = coupled_matrices(GAUSSIAN, BERNOULLI, n, seed_stream(7, 0, f"compare/{n}"))
        m2 = np.trace(green_function(hv, z2)) / n
        assert abs(trace.products[0, 0] - trace.values[0, 0] * m2) < 1e-12
        value, se = trace.product_difference()
        assert value >= 0 and se >= 0

    def test_complex_and_random_schedule(self) -> None:
        trace = swap_experiment(
            GAUSSIAN, BERNOULLI, 10, 0.5j, samples=3, seed=8, symmetry="complex_hermitian", schedule="random"
        )
        assert trace.telescoping_error <= 1e-10
        assert len(trace.schedule) == 55

    def test_thread_invariance(self) -> None:
        one = swap_experiment(GAUSSIAN, BERNOULLI, 10, 1j, samples=4, seed=9, threads=1)
        many = swap_experiment(GAUSSIAN, BERNOULLI, 10, 1j, samples=4, seed=9, threads=3)
        assert np.array_equal(one.values, many.values)

    def test_profile_csv(self, tmp_path) -> None:
        trace = swap_experiment(GAUSSIAN, BERNOULLI, 6, 1j, samples=2, seed=10)
        path = tmp_path / "profile.csv"
        trace.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "checkpoint,cumulative_delta,stderr"
        assert len(lines) == 1 + len(trace.checkpoints)
        assert lines[1].startswith("0,0,")

    def test_preconditions(self) -> None:
        with pytest.raises(ValueError, match="N <= 400"):
            swap_experiment(GAUSSIAN, BERNOULLI, 401, 1j, samples=2, seed=0)
        with pytest.raises(ValueError, match="Im z >= N"):
            swap_experiment(GAUSSIAN, BERNOULLI, 100, 1e-4j, samples=2, seed=0)
        with pytest.raises(ValueError, match="two samples"):
            swap_experiment(GAUSSIAN, BERNOULLI, 10, 1j, samples=1, seed=0)

    def test_decay_fit(self) -> None:
        traces, fit = comparison_decay(GAUSSIAN, BERNOULLI, [10, 20], samples=20, seed=11, eta_exponent=0.0)
        assert len(traces) == 2
        assert math.isfinite(fit.slope)


COMPARE = {
    "experiment": "compare",
    "samples": 2,
    "seed": 1,
    "n": 8,
    "ensemble": {"entries": {"kind": "gaussian"}},
    "params": {"repeats": 2},
}


class TestRunCompare:
    """Tests for the compare experiment rows"""

    def test_telescoping_row_passes(self) -> None:
        report = run(config_from_mapping(COMPARE))
        row = next(r for r in report.rows if r.statistic == "telescoping_error")
        assert row.status == "pass"

    def test_faulty_update_fails_telescoping(self, monkeypatch) -> None:
        exact = rmtlab.compare.rank2_update

        def faulty(G: np.ndarray, i: int, j: int, delta: complex) -> Optional[np.ndarray]:
            updated = exact(G, i, j, delta)
            return None if updated is None else updated * (1.0 + 1e-6)

        monkeypatch.setattr(rmtlab.compare, "rank2_update", faulty)
        report = run(config_from_mapping(COMPARE))
        row = next(r for r in report.rows if r.statistic == "telescoping_error")
        assert row.status == "fail" and row.value > 1e-9
