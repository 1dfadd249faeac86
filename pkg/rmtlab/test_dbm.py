"""
Unit tests for Dyson Brownian motion
"""

import math

import numpy as np
import pytest

from rmtlab.dbm import (
    DbmState,
    dbm_drift,
    dbm_sde_run,
    dbm_sde_step,
    moment_drift,
    ou_interpolate,
    ou_matrix_flow,
    relaxation_experiment,
)
from rmtlab.ensembles import BERNOULLI, GAUSSIAN, UNIFORM, EnsembleSpec, draw_sample, make_moment_matched_three_point
from rmtlab.rng import seed_stream
from rmtlab.spectral import eigen
from rmtlab.stats import ks_distance, pool_gaps, unfold


def upper_entries(H: np.ndarray) -> np.ndarray:
    return H[np.triu_indices(H.shape[0], k=1)]


class TestMatrixFlow:
    """Tests for ou_matrix_flow"""

    def test_zero_time(self) -> None:
        H0 = draw_sample(EnsembleSpec("real_symmetric", 20, entries=BERNOULLI), 1, 0)
        Ht = ou_matrix_flow(H0, 0.0, seed_stream(1, 0, "flow"))
        assert np.array_equal(Ht.entries, H0.entries)
        assert Ht.flow_time == 0.0

    def test_long_time_is_gaussian(self) -> None:
        n = 450
        H0 = draw_sample(EnsembleSpec("real_symmetric", n, entries=BERNOULLI), 2, 0)
        Ht = ou_matrix_flow(H0, 50.0, seed_stream(2, 0, "flow"))
        reference = draw_sample(EnsembleSpec.goe(n), 2, 1)
        x = upper_entries(Ht.entries) * math.sqrt(n)
        y = upper_entries(reference.entries) * math.sqrt(n)
        assert x.size > 100_000
        assert ks_distance(x, y) < 0.01

    def test_variance_preserved(self) -> None:
        n = 200
        H0 = draw_sample(EnsembleSpec("real_symmetric", n, entries=BERNOULLI), 3, 0)
        for t in (0.1, 1.0):
            Ht = ou_matrix_flow(H0, t, seed_stream(3, 0, f"flow/{t}"))
            var = np.mean(upper_entries(Ht.entries) ** 2) * n
            assert abs(var - 1.0) < 0.03, f"t = {t}: N E h^2 = {var:.4f}"

    def test_semigroup(self) -> None:
        """Flow for s then t matches one flow for s + t in entry moments"""
        n = 200
        H0 = draw_sample(EnsembleSpec("real_symmetric", n, entries=BERNOULLI), 4, 0)
        two = ou_matrix_flow(ou_matrix_flow(H0, 0.2, seed_stream(4, 0, "a")), 0.3, seed_stream(4, 0, "b"))
        one = ou_matrix_flow(H0, 0.5, seed_stream(4, 0, "c"))
        assert two.flow_time == pytest.approx(one.flow_time)
        for power in (2, 4):
            m_two = np.mean((upper_entries(two.entries) * math.sqrt(n)) ** power)
            m_one = np.mean((upper_entries(one.entries) * math.sqrt(n)) ** power)
            assert abs(m_two - m_one) < 0.1 * power

    def test_symmetry_mismatch(self) -> None:
        H0 = draw_sample(EnsembleSpec.goe(5), 0, 0)
        with pytest.raises(ValueError, match="Symmetry mismatch"):
            ou_matrix_flow(H0, 0.1, np.random.default_rng(0), symmetry="complex_hermitian")

    def test_negative_time(self) -> None:
        H0 = draw_sample(EnsembleSpec.goe(5), 0, 0)
        with pytest.raises(ValueError, match="non-negative"):
            ou_interpolate(H0, np.zeros((5, 5)), -0.1)


class TestMomentDrift:
    """Tests for moment_drift"""

    def test_second_moment_invariant(self) -> None:
        for t in (0.0, 0.3, 5.0):
            drift = moment_drift(BERNOULLI, t, orders=(2,))[0]
            assert abs(drift.value - 1.0) < 1e-14

    def test_symmetric_third_moment(self) -> None:
        assert moment_drift(BERNOULLI, 0.7, orders=(3,))[0].drift == 0.0

    def test_bernoulli_fourth_moment(self) -> None:
        t = 0.01
        drift = moment_drift(BERNOULLI, t, orders=(4,))[0]
        assert abs(drift.value - (math.exp(-2 * t) + 3 * (1 - math.exp(-2 * t)))) < 1e-14
        assert drift.drift <= 0.03
        assert drift.drift <= drift.bound

    def test_gaussian_is_fixed(self) -> None:
        for drift in moment_drift(GAUSSIAN, 0.4):
            assert drift.drift < 1e-14

    def test_bounds_hold(self) -> None:
        for t in (0.001, 0.05, 0.5, 2.0):
            for law in (BERNOULLI, UNIFORM, make_moment_matched_three_point()):
                for drift in moment_drift(law, t):
                    assert drift.drift <= drift.bound + 1e-15, str(drift)

    def test_unsupported_order(self) -> None:
        with pytest.raises(ValueError, match="orders 1..4"):
            moment_drift(BERNOULLI, 0.1, orders=(5,))


class TestDbmSde:
    """Tests for the eigenvalue SDE"""

    def test_drift_value(self) -> None:
        drift = dbm_drift(np.array([-1.0, 1.0]), beta=2.0)
        assert drift[1] == pytest.approx(-0.25, abs=1e-15)

    def test_state_requires_order(self) -> None:
        with pytest.raises(ValueError, match="strictly increasing"):
            DbmState(0.0, np.array([1.0, 1.0]), beta=2.0)

    def test_fixed_point_two_particles(self) -> None:
        for beta in (1.0, 2.0, 4.0):
            start = DbmState(0.0, np.array([-2.0, 2.0]), beta)
            end = dbm_sde_run(start, 80.0 / beta, 0.01, np.random.default_rng(0), noise=False).final
            assert np.max(np.abs(end.positions - np.array([-1, 1]) / math.sqrt(2))) < 1e-6

    def test_antisymmetry_without_noise(self) -> None:
        state = DbmState(0.0, np.linspace(-1.0, 1.0, 6), beta=1.0)
        for _ in range(20):
            state = dbm_sde_step(state, 0.01, np.random.default_rng(0), noise=False)
        assert np.max(np.abs(state.positions + state.positions[::-1])) < 1e-12

    def test_order_preserved(self) -> None:
        rng = seed_stream(5, 0, "sde")
        state = DbmState(0.0, np.linspace(-2.0, 2.0, 30), beta=1.0)
        trajectory = dbm_sde_run(state, 0.5, 1e-3, rng)
        assert np.all(np.diff(trajectory.positions, axis=1) > 0)
        assert trajectory.final.t == pytest.approx(0.5)

    def test_single_particle_stationary_variance(self) -> None:
        """N = 1 is an OU process with stationary variance 2/beta"""
        for beta in (1.0, 2.0):
            rng = seed_stream(6, int(beta), "sde")
            run = dbm_sde_run(DbmState(0.0, np.array([0.0]), beta), 4000.0, 0.02, rng)
            values = run.positions[run.times > 20.0, 0]
            assert abs(np.mean(values**2) - 2.0 / beta) < 0.15 * 2.0 / beta

    def test_collision_dump(self) -> None:
        state = DbmState(0.0, np.array([0.0, 1e-12]), beta=2.0)
        with pytest.raises(RuntimeError, match="positions ="):
            dbm_sde_step(state, 1.0, np.random.default_rng(0), max_halvings=2)

    def test_trajectory_csv(self, tmp_path) -> None:
        state = DbmState(0.0, np.array([-1.0, 0.0, 1.0]), beta=2.0)
        path = tmp_path / "trajectory.csv"
        dbm_sde_run(state, 0.05, 0.01, np.random.default_rng(1), dump=path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "t,lambda_1,lambda_2,lambda_3"
        assert len(lines) == 1 + 6

    def test_matches_matrix_flow(self) -> None:
        """At beta = 2 the SDE run from eig(H0) and the GUE matrix flow agree on bulk gaps"""
        n, t, samples = 100, 0.1, 40
        spec = EnsembleSpec("complex_hermitian", n, entries=BERNOULLI)
        flow_gaps, sde_gaps = [], []
        for k in range(samples):
            H0 = draw_sample(spec, 7, k)
            Ht = ou_matrix_flow(H0, t, seed_stream(7, k, "flow"))
            flow_gaps.append(unfold(eigen(Ht), window=(0.0, 1.0)))
            start = DbmState.from_matrix(H0)
            end = dbm_sde_run(start, t, 5e-3, seed_stream(7, k, "sde")).final
            sde_gaps.append(unfold(end.positions, window=(0.0, 1.0)))
        distance = ks_distance(pool_gaps(flow_gaps).gaps, pool_gaps(sde_gaps).gaps)
        assert distance < 0.05


class TestRelaxation:
    """Tests for relaxation_experiment"""

    def test_gaps_universal_at_time_zero(self) -> None:
        spec = EnsembleSpec("real_symmetric", 400, entries=BERNOULLI)
        table = relaxation_experiment(spec, [0.0], samples=30, seed=8)
        assert table.rows[0].ks_local < 0.05

    def test_global_relaxes(self) -> None:
        n = 400
        spec = EnsembleSpec("real_symmetric", n, entries=BERNOULLI)
        grid = [1.0 / n, 0.1, 1.0, 3.0]
        table = relaxation_experiment(spec, grid, samples=20, seed=9, detune_amount=0.05)
        ks = table.column("ks_global")
        assert ks[2] < ks[0]
        assert table.trend("ks_global") < 0
        assert ks[3] <= 3 * table.rows[3].global_floor + 0.01

    def test_csv_and_validation(self, tmp_path) -> None:
        spec = EnsembleSpec("real_symmetric", 100, entries=BERNOULLI)
        table = relaxation_experiment(spec, [0.0, 1.0], samples=4, seed=10)
        path = tmp_path / "relax.csv"
        table.to_csv(path)
        assert path.read_text().splitlines()[0] == "t,ks_global,ks_local,global_floor,local_floor"
        with pytest.raises(ValueError, match="non-negative"):
            relaxation_experiment(spec, [-1.0], samples=4, seed=10)
