"""Discrete-orbit verifier: matrix construction and limit theorems."""

import numpy as np
import pytest

from orbitmc import oracle
from orbitmc.errors import WindowTooSmallError
from orbitmc.oracle import (
    DiscreteOrbit,
    aperiodic_weight_sums,
    build_kernel_matrix,
    detailed_balance_residual,
    escape_time_check,
    invariance_residual,
    time_average_weights,
)


@pytest.fixture
def orbit123():
    return DiscreteOrbit(densities=np.array([1.0, 2.0, 3.0]))


class TestMatrixConstruction:
    def test_escaping_rows_on_123(self, orbit123):
        K = build_kernel_matrix(orbit123, "escaping")
        assert K[0] == pytest.approx([0.0, 1.0, 0.0])
        assert K[1] == pytest.approx([0.0, 0.5, 0.5])
        assert K[2] == pytest.approx([1.0 / 3.0, 0.0, 2.0 / 3.0])

    def test_constant_density_gives_cyclic_permutation(self):
        orbit = DiscreteOrbit(densities=np.full(5, 2.5))
        K = build_kernel_matrix(orbit, "escaping")
        P = np.roll(np.eye(5), 1, axis=1)
        assert K == pytest.approx(P)

    def test_t2_escaping_is_metropolis_matrix(self, rng):
        for _ in range(20):
            w = np.exp(rng.uniform(-3, 3, size=2))
            orbit = DiscreteOrbit(densities=w)
            K = build_kernel_matrix(orbit, "escaping")
            a01 = min(1.0, w[1] / w[0])
            a10 = min(1.0, w[0] / w[1])
            expected = np.array([[1 - a01, a01], [a10, 1 - a10]])
            assert K == pytest.approx(expected, rel=1e-14)

    def test_rows_are_stochastic(self, rng):
        orbit = DiscreteOrbit(densities=np.exp(rng.uniform(-5, 5, size=17)))
        for kind, kw in [
            ("escaping", {}),
            ("m_step", {"m": 3}),
            ("diffusing", {"c_choice": "half_inf"}),
            ("diffusing", {"c_choice": "optimal"}),
            ("linear_combination", {"weights": np.full(17, 1 / 17)}),
        ]:
            K = build_kernel_matrix(orbit, kind, **kw)
            assert K.sum(axis=1) == pytest.approx(np.ones(17), abs=1e-14)
            assert np.all(K >= 0)

    def test_positive_density_required(self):
        with pytest.raises(ValueError):
            DiscreteOrbit(densities=np.array([1.0, 0.0, 2.0]))


class TestInvariance:
    def test_escaping_123_machine_precision(self, orbit123):
        K = build_kernel_matrix(orbit123, "escaping")
        assert invariance_residual(K, orbit123.masses) <= 1e-15

    def test_random_matrix_not_invariant(self, rng):
        M = rng.random((4, 4))
        M /= M.sum(axis=1, keepdims=True)
        p = rng.random(4)
        assert invariance_residual(M, p) > 1e-3

    def test_diffusing_periodic(self, rng):
        orbit = DiscreteOrbit(densities=np.exp(rng.uniform(-4, 4, size=9)))
        for c in ("half_inf", "optimal"):
            K = build_kernel_matrix(orbit, "diffusing", c_choice=c)
            assert invariance_residual(K, orbit.masses) <= 1e-14

    def test_suite_passes(self):
        report = oracle.suite_invariance(seed=1)
        assert report["passed"]


class TestDetailedBalance:
    def test_diffusing_always_reversible(self, rng):
        orbit = DiscreteOrbit(
            densities=np.exp(rng.uniform(-4, 4, size=7)),
            jacobians=np.exp(rng.uniform(-1, 1, size=7)),
        )
        K = build_kernel_matrix(orbit, "diffusing")
        assert detailed_balance_residual(K, orbit.masses) <= 1e-14

    def test_involution_reversible(self, rng):
        orbit = DiscreteOrbit(densities=np.exp(rng.uniform(-3, 3, size=2)))
        K = build_kernel_matrix(orbit, "escaping")
        assert detailed_balance_residual(K, orbit.masses) <= 1e-14

    def test_three_cycle_breaks_balance(self, orbit123):
        K = build_kernel_matrix(orbit123, "escaping")
        assert detailed_balance_residual(K, orbit123.masses) > 1e-3

    def test_suite_passes(self):
        report = oracle.suite_reversibility(seed=2)
        assert report["passed"]


class TestTimeAverages:
    def test_single_step_is_delta(self, orbit123):
        K = build_kernel_matrix(orbit123, "escaping")
        avg = time_average_weights(K, 1, start=1)
        assert avg == pytest.approx([0.0, 1.0, 0.0])

    def test_escaping_123_converges_to_weights(self, orbit123):
        K = build_kernel_matrix(orbit123, "escaping")
        avg = time_average_weights(K, 10**5)
        assert np.max(np.abs(avg - np.array([1, 2, 3]) / 6.0)) < 1e-3

    def test_diffusing_lattice_converges_to_density(self):
        lattice = np.arange(-20, 21, dtype=float)
        dens = np.exp(-0.5 * lattice**2)
        orbit = DiscreteOrbit(densities=dens, periodic=False)
        K = build_kernel_matrix(orbit, "diffusing")
        avg = time_average_weights(K, 10**5, start=20)
        assert np.max(np.abs(avg - dens / dens.sum())) < 1e-3


class TestAperiodicSums:
    def test_constant_half_reaches_two(self):
        sums = aperiodic_weight_sums(np.full(3000, 0.5), 4000)
        assert np.max(np.abs(sums.cumulative[:20] - 2.0)) < 1e-3
        assert sums.time_average[0] < 1e-3

    def test_behind_start_never_visited(self):
        sums = aperiodic_weight_sums(np.full(2000, 0.5), 2000, start=3)
        assert np.all(sums.cumulative[:3] == 0.0)

    def test_window_too_small_detected(self):
        with pytest.raises(WindowTooSmallError):
            aperiodic_weight_sums(np.full(50, 0.9), 5000)

    def test_invalid_g_rejected(self):
        with pytest.raises(ValueError):
            aperiodic_weight_sums(np.array([0.5, 1.5]), 10)


class TestEscapeTime:
    def test_harmonic_profile_prediction(self, rng):
        rep = escape_time_check(np.array([1.0, 0.5, 1.0 / 3.0]), 3, 100_000, rng)
        assert rep.predicted == pytest.approx(6.0)
        assert rep.within <= 3.0

    def test_certain_acceptance_deterministic(self, rng):
        rep = escape_time_check(np.ones(4), 4, 1000, rng)
        assert rep.empirical_mean == 4.0
        assert rep.std_error == 0.0
        assert rep.within == 0.0

    def test_suite_passes(self):
        report = oracle.suite_escape_time(seed=3)
        assert report["passed"]


class TestReturningOrbit:
    def test_suite_passes(self):
        report = oracle.suite_returning(seed=4)
        assert report["passed"]

    def test_gap_shrinks_along_ladder(self):
        report = oracle.suite_returning(seed=5)
        assert report["passed"]
