import math

import numpy as np
import pytest

from rbmcda.gaussians import (
    SingularInnovationError,
    kf_predict_batch,
    kf_update_batch,
)
from rbmcda.oumodel import (
    ModelParams,
    ObservationStats,
    ou_birth_density,
    ou_discretize,
    ou_measurement,
    ou_predict_batch,
    ou_step_coeffs,
    ou_update_batch,
    steady_state_var,
)


class TestModelParams:
    def test_rejects_nonpositive(self):
        for bad in [dict(q=0.0, lam=1.0, sigma=1.0),
                    dict(q=1.0, lam=-1.0, sigma=1.0),
                    dict(q=1.0, lam=1.0, sigma=0.0)]:
            with pytest.raises(ValueError):
                ModelParams(**bad)

    def test_vector_roundtrip(self):
        theta = ModelParams(q=100.0, lam=0.5, sigma=0.5)
        np.testing.assert_allclose(theta.to_vector(), [10.0, 0.5, 0.5])
        back = ModelParams.from_vector(theta.to_vector())
        assert back == theta

    def test_from_vector_rejects_negative_sqrt_q(self):
        with pytest.raises(ValueError):
            ModelParams.from_vector([-1.0, 0.5, 0.5])


class TestDiscretize:
    def test_zero_step(self):
        A, Q = ou_discretize(ModelParams(q=3.0, lam=0.7, sigma=1.0), 0.0)
        np.testing.assert_array_equal(A, np.eye(4))
        np.testing.assert_array_equal(Q, np.zeros((4, 4)))

    def test_negative_step_rejected(self):
        with pytest.raises(ValueError):
            ou_discretize(ModelParams(q=1.0, lam=1.0, sigma=1.0), -0.1)

    def test_brownian_limit(self):
        # lam -> 0: transition -> identity, step variance -> q * dt.
        theta = ModelParams(q=2.5, lam=1e-8, sigma=1.0)
        A, Q = ou_discretize(theta, 1.0)
        assert np.abs(A - np.eye(4)).max() < 1e-6
        assert Q[2, 2] == pytest.approx(theta.q * 1.0, rel=1e-6)

    def test_structure(self):
        theta = ModelParams(q=4.0, lam=0.8, sigma=1.0)
        A, Q = ou_discretize(theta, 0.6)
        decay = math.exp(-0.8 * 0.6)
        expected_A = np.eye(4)
        expected_A[2, 2] = expected_A[3, 3] = decay
        expected_A[2, 0] = expected_A[3, 1] = 1 - decay
        np.testing.assert_allclose(A, expected_A, rtol=1e-15)
        step_var = steady_state_var(theta) * (1 - math.exp(-2 * 0.8 * 0.6))
        np.testing.assert_allclose(Q, np.diag([0, 0, step_var, step_var]), rtol=1e-15)

    def test_semigroup(self, rng):
        # Composing two steps equals the single combined step to 1e-10.
        for _ in range(50):
            theta = ModelParams(
                q=float(rng.uniform(0.1, 50.0)),
                lam=float(rng.uniform(0.01, 5.0)),
                sigma=1.0,
            )
            t1, t2 = rng.uniform(0.0, 3.0, size=2)
            A1, Q1 = ou_discretize(theta, t1)
            A2, Q2 = ou_discretize(theta, t2)
            A12, Q12 = ou_discretize(theta, t1 + t2)
            np.testing.assert_allclose(A2 @ A1, A12, atol=1e-10)
            np.testing.assert_allclose(A2 @ Q1 @ A2.T + Q2, Q12, atol=1e-10)

    def test_noise_psd(self, rng):
        for _ in range(100):
            theta = ModelParams(
                q=float(rng.uniform(1e-3, 100.0)),
                lam=float(rng.uniform(1e-3, 10.0)),
                sigma=1.0,
            )
            _, Q = ou_discretize(theta, float(rng.uniform(0.0, 10.0)))
            assert np.linalg.eigvalsh(Q).min() >= 0.0

    def test_stationary_fixed_point(self, rng):
        # Location-block recursion keeps the stationary variance fixed.
        for _ in range(20):
            theta = ModelParams(
                q=float(rng.uniform(0.1, 20.0)),
                lam=float(rng.uniform(0.05, 4.0)),
                sigma=1.0,
            )
            dt = float(rng.uniform(0.0, 5.0))
            A, Q = ou_discretize(theta, dt)
            stationary = steady_state_var(theta)
            recursed = A[2, 2] ** 2 * stationary + Q[2, 2]
            assert recursed == pytest.approx(stationary, rel=1e-12)


class TestMeasurement:
    def test_paper_noise_level(self):
        # sigma = 0.5 gives R = 0.25 I.
        _, R = ou_measurement(ModelParams(q=100.0, lam=0.5, sigma=0.5))
        np.testing.assert_array_equal(R, 0.25 * np.eye(2))

    def test_unit_noise(self):
        _, R = ou_measurement(ModelParams(q=1.0, lam=1.0, sigma=1.0))
        np.testing.assert_array_equal(R, np.eye(2))

    def test_selects_position_block(self, rng):
        H, _ = ou_measurement(ModelParams(q=1.0, lam=1.0, sigma=1.0))
        for _ in range(5):
            state = rng.standard_normal(4)
            np.testing.assert_array_equal(H @ state, state[2:])


class TestObservationStats:
    def test_from_observations(self, rng):
        ys = rng.standard_normal((40, 2))
        stats = ObservationStats.from_observations(ys)
        np.testing.assert_allclose(stats.mean, ys.mean(axis=0))
        np.testing.assert_allclose(stats.cov, np.cov(ys, rowvar=False, ddof=1))
        assert stats.count == 40

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            ObservationStats.from_observations(np.zeros((1, 2)))


def random_state_batch(rng, n):
    means = rng.standard_normal((n, 4)) * 5.0
    covs = np.empty((n, 4, 4))
    for i in range(n):
        root = rng.standard_normal((4, 4))
        covs[i] = root @ root.T + 0.5 * np.eye(4)
    return means, covs


class TestStructuredKernels:
    """The model-specific fast kernels must agree with the generic Kalman
    kernels fed the matrices from ou_discretize / ou_measurement."""

    def test_predict_matches_generic(self, rng):
        theta = ModelParams(q=7.0, lam=0.9, sigma=0.8)
        for dt in (0.0, 0.05, 1.7):
            A, Q = ou_discretize(theta, dt)
            means, covs = random_state_batch(rng, 6)
            fast = ou_predict_batch(means, covs, ou_step_coeffs(theta, dt))
            ref = kf_predict_batch(means, covs, A, Q)
            np.testing.assert_allclose(fast[0], ref[0], rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(fast[1], ref[1], rtol=1e-12, atol=1e-12)

    def test_update_matches_generic(self, rng):
        theta = ModelParams(q=7.0, lam=0.9, sigma=0.8)
        H, R = ou_measurement(theta)
        y = rng.standard_normal(2) * 3.0
        means, covs = random_state_batch(rng, 6)
        fast = ou_update_batch(means, covs, y, theta.sigma**2)
        ref = kf_update_batch(means, covs, y, H, R)
        np.testing.assert_allclose(fast[0], ref[0], rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(fast[1], ref[1], rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(fast[2], ref[2], rtol=1e-10)

    def test_update_rows_independent_of_batch(self, rng):
        # Elementwise algebra: row results are bit-identical however the
        # batch is composed.
        theta = ModelParams(q=7.0, lam=0.9, sigma=0.8)
        y = rng.standard_normal(2)
        means, covs = random_state_batch(rng, 5)
        full = ou_update_batch(means, covs, y, theta.sigma**2)
        solo = ou_update_batch(means[2:3], covs[2:3], y, theta.sigma**2)
        np.testing.assert_array_equal(full[0][2], solo[0][0])
        np.testing.assert_array_equal(full[1][2], solo[1][0])
        np.testing.assert_array_equal(full[2][2:3], solo[2][0:1])

    def test_update_singular_raises(self):
        means = np.zeros((1, 4))
        covs = np.zeros((1, 4, 4))
        with pytest.raises(SingularInnovationError):
            ou_update_batch(means, covs, np.zeros(2), 0.0)


class TestBirthDensity:
    def test_point_observations(self):
        # All observations identical: location marginal is the stationary law.
        theta = ModelParams(q=8.0, lam=2.0, sigma=1.0)
        stats = ObservationStats(mean=np.array([3.0, -1.0]), cov=np.zeros((2, 2)), count=5)
        birth = ou_birth_density(theta, stats)
        np.testing.assert_array_equal(birth.mean, [3.0, -1.0, 3.0, -1.0])
        np.testing.assert_allclose(
            birth.cov[2:, 2:], steady_state_var(theta) * np.eye(2)
        )

    def test_psd_for_any_inputs(self, rng):
        for _ in range(30):
            root = rng.standard_normal((2, 2))
            stats = ObservationStats(
                mean=rng.standard_normal(2), cov=root @ root.T, count=10
            )
            theta = ModelParams(
                q=float(rng.uniform(0.1, 50.0)),
                lam=float(rng.uniform(0.05, 5.0)),
                sigma=1.0,
            )
            birth = ou_birth_density(theta, stats)
            assert np.linalg.eigvalsh(birth.cov).min() >= -1e-12

    def test_two_stage_sampling_oracle(self, rng):
        # position = home + stationary excursion; the position marginal under
        # the joint must match two-stage sampling within 3 standard errors.
        theta = ModelParams(q=6.0, lam=1.5, sigma=1.0)
        root = np.array([[1.2, 0.0], [0.4, 0.8]])
        stats = ObservationStats(
            mean=np.array([1.0, 2.0]), cov=root @ root.T, count=10
        )
        birth = ou_birth_density(theta, stats)
        draws = 200_000
        homes = rng.multivariate_normal(stats.mean, stats.cov, size=draws)
        positions = homes + rng.multivariate_normal(
            np.zeros(2), steady_state_var(theta) * np.eye(2), size=draws
        )
        sample_cov = np.cov(positions, rowvar=False)
        expected = birth.cov[2:, 2:]
        diag = np.diag(expected)
        se = np.sqrt((np.outer(diag, diag) + expected**2) / draws)
        assert np.all(np.abs(sample_cov - expected) < 3 * se)
        se_mean = positions.std(axis=0) / math.sqrt(draws)
        assert np.all(np.abs(positions.mean(axis=0) - birth.mean[2:]) < 3 * se_mean)

    def test_block_diagonal_switch(self):
        theta = ModelParams(q=4.0, lam=1.0, sigma=1.0)
        stats = ObservationStats(mean=np.zeros(2), cov=np.eye(2), count=10)
        joint = ou_birth_density(theta, stats, block_diagonal=False)
        indep = ou_birth_density(theta, stats, block_diagonal=True)
        np.testing.assert_array_equal(joint.cov[:2, 2:], np.eye(2))
        np.testing.assert_array_equal(indep.cov[:2, 2:], np.zeros((2, 2)))
        np.testing.assert_array_equal(joint.cov[2:, 2:], indep.cov[2:, 2:])
