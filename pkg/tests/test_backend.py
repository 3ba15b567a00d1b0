"""Compiled core vs NumPy fallback: same semantics, one contract."""

import numpy as np
import pytest

from orbitmc import _purepy, backend, targets


def builtin_targets():
    return [
        targets.make_banana(),
        targets.make_ill_conditioned_gaussian(6),
        targets.make_logistic_regression(
            targets.make_synthetic_logistic(2, n_rows=50, n_features=5)
        ),
        targets.generate_item_response(3, n_students=12, n_questions=20, n_responses=80)[1],
    ]


needs_core = pytest.mark.skipif(
    not backend.HAVE_COMPILED, reason="compiled core not built"
)


@needs_core
class TestDensityParity:
    @pytest.mark.parametrize("idx", range(4))
    def test_logp_and_grad_match(self, idx, rng):
        t = builtin_targets()[idx]
        for _ in range(25):
            x = rng.standard_normal(t.dim)
            lp_core, g_core = backend.core_logp_grad(t, x)
            lp_ref = float(t.log_density(x))
            g_ref = np.asarray(t.grad_log_density(x))
            scale = max(1.0, abs(lp_ref))
            assert abs(lp_core - lp_ref) <= 1e-11 * scale
            gs = max(1.0, float(np.max(np.abs(g_ref))))
            assert np.max(np.abs(g_core - g_ref)) <= 1e-11 * gs


@needs_core
class TestRolloutParity:
    @pytest.mark.parametrize("idx", range(4))
    @pytest.mark.parametrize("beta", [1.0, 0.92])
    def test_trajectories_agree(self, idx, beta, rng):
        t = builtin_targets()[idx]
        x0 = 0.5 * rng.standard_normal(t.dim)
        v0 = rng.standard_normal(t.dim)
        eps = 0.05
        a = backend.rollout(t, x0, v0, eps, beta, 6, 4)
        b = _purepy.rollout(t, x0, v0, eps, beta, 6, 4)
        assert (a[3], a[4], a[5]) == (b[3], b[4], b[5])  # ok counts, evals
        assert np.max(np.abs(a[0] - b[0])) < 1e-10
        assert np.max(np.abs(a[1] - b[1])) < 1e-10
        assert np.max(np.abs(a[2] - b[2])) < 1e-9

    @pytest.mark.parametrize("idx", range(4))
    def test_contracting_orbits_agree(self, idx, rng):
        t = builtin_targets()[idx]
        beta = 0.8 ** (1.0 / t.dim)
        x0 = 0.5 * rng.standard_normal(t.dim)
        v0 = rng.standard_normal(t.dim)
        a = backend.contracting_orbit(t, x0, v0, 0.05, beta, np.log(1e3), 10_000)
        b = _purepy.contracting_orbit(t, x0, v0, 0.05, beta, np.log(1e3), 10_000)
        assert a[0].shape == b[0].shape
        assert (a[3], a[4], a[5], a[6]) == (b[3], b[4], b[5], b[6])
        assert np.max(np.abs(a[0] - b[0])) < 1e-9
        assert np.max(np.abs(a[2] - b[2])) < 1e-8


class TestSelection:
    def test_force_purepy(self):
        t = targets.make_banana()
        old = backend.backend_name()
        try:
            backend.set_backend("purepy")
            assert backend.backend_name() == "purepy"
        finally:
            backend.set_backend("auto")
        assert backend.backend_name() == old

    def test_descriptorless_target_uses_fallback(self, rng):
        # custom target without a core descriptor must run through purepy
        t = targets.TargetModel(
            name="quartic",
            dim=1,
            log_density=lambda x: -0.25 * np.sum(np.asarray(x) ** 4, axis=-1),
            grad_log_density=lambda x: -np.asarray(x, dtype=np.float64) ** 3,
        )
        assert t.core_spec is None
        xs, vs, logps, ok_f, ok_b, ge = backend.rollout(
            t, np.array([0.3]), np.array([0.1]), 0.1, 1.0, 5, 0
        )
        assert ok_f == 5
        assert ge == 6

    def test_invalid_mode_rejected(self):
        with pytest.raises(ValueError):
            backend.set_backend("fortran")

    @needs_core
    def test_nan_truncation_matches(self, rng):
        # density blows up past |x| > 1e150: both backends truncate the orbit
        bad = targets.TargetModel(
            name="hole",
            dim=1,
            log_density=lambda x: np.where(
                np.abs(np.asarray(x)[..., 0]) < 2.0, 0.0, np.nan
            ),
            grad_log_density=lambda x: np.where(
                np.abs(np.asarray(x, dtype=np.float64)) < 2.0, 0.0, np.nan
            ),
        )
        xs, vs, logps, ok_f, ok_b, ge = _purepy.rollout(
            bad, np.array([0.0]), np.array([1.0]), 1.0, 1.0, 5, 0
        )
        assert ok_f < 5  # walked into the hole and stopped
