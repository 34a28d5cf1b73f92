import math

import numpy as np
import pytest

from rbmcda.diagnostics import (
    WeightedIntDist,
    convergence_curve,
    ess,
    kolmogorov,
    num_targets_dist,
    ospa,
    psrf,
)
from rbmcda.pmcmc import Trace


def point_mass(value):
    return WeightedIntDist(np.array([value]), np.array([1.0]))


def make_trace(n_alive, occupancy=None, algorithm="pgibbs", kalman=None,
               particle_counts=None, particle_weights=None):
    n_alive = np.asarray(n_alive, dtype=int)
    n = n_alive.size
    if occupancy is None:
        occupancy = np.ones(n)
    return Trace(
        algorithm=algorithm,
        param_names=("sqrt_q", "lam", "sigma"),
        thetas=np.ones((n, 3)),
        log_liks=np.zeros(n),
        log_priors=np.zeros(n),
        accepted=np.ones(n, dtype=bool),
        occupancy=np.asarray(occupancy, dtype=float),
        histories=[(1,)] * n,
        n_alive=n_alive,
        n_seen=n_alive,
        kalman_calls=np.arange(1, n + 1, dtype=np.int64) * 10 if kalman is None
        else np.asarray(kalman, dtype=np.int64),
        proposal_covs=np.zeros((n, 3, 3)),
        particle_counts_alive=particle_counts,
        particle_counts_seen=particle_counts,
        particle_weights=particle_weights,
    )


class TestWeightedIntDist:
    def test_from_samples(self):
        dist = WeightedIntDist.from_samples([3, 3, 5, 4, 3])
        np.testing.assert_array_equal(dist.support, [3, 4, 5])
        np.testing.assert_allclose(dist.probs, [0.6, 0.2, 0.2])

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            WeightedIntDist(np.array([1, 2]), np.array([0.5, 0.6]))

    def test_point_mass_all_same(self):
        dist = WeightedIntDist.from_samples([30] * 50)
        assert dist.prob_of(30) == 1.0

    def test_two_values_half(self):
        dist = WeightedIntDist.from_samples([29, 30])
        np.testing.assert_allclose(dist.probs, [0.5, 0.5])


class TestNumTargets:
    def test_retained_histogram(self):
        trace = make_trace([30] * 10)
        dist = num_targets_dist(trace)
        assert dist.prob_of(30) == 1.0

    def test_occupancy_weighting(self):
        counts = np.array([[1, 2], [1, 2], [3, 3]])
        weights = np.array([[0.5, 0.5], [0.5, 0.5], [1.0, 0.0]])
        trace = make_trace(
            [1, 1, 3], occupancy=[1.0, 0.0, 2.0], algorithm="pmmh",
            particle_counts=counts, particle_weights=weights,
        )
        dist = num_targets_dist(trace)
        # iteration 0: weight 0.5/0.5 on counts 1, 2; iteration 1: zeroed;
        # iteration 2: weight 2 on count 3. Total mass 3.
        np.testing.assert_allclose(
            [dist.prob_of(1), dist.prob_of(2), dist.prob_of(3)],
            [0.5 / 3, 0.5 / 3, 2.0 / 3],
        )

    def test_occupancy_can_be_disabled(self):
        counts = np.array([[5, 5], [5, 5]])
        trace = make_trace(
            [1, 2], algorithm="pmmh", particle_counts=counts,
            particle_weights=np.full((2, 2), 0.5),
        )
        dist = num_targets_dist(trace, use_occupancy=False)
        np.testing.assert_array_equal(dist.support, [1, 2])


class TestKolmogorov:
    def test_identical(self):
        d = WeightedIntDist.from_samples([1, 2, 2, 3])
        assert kolmogorov(d, d) == 0.0

    def test_disjoint_point_masses(self):
        assert kolmogorov(point_mass(1), point_mass(2)) == 1.0

    def test_half_gap(self):
        d1 = WeightedIntDist(np.array([1, 2]), np.array([0.5, 0.5]))
        assert kolmogorov(d1, point_mass(1)) == 0.5

    def test_metric_axioms(self, rng):
        dists = []
        for _ in range(12):
            support = np.arange(1, 7)
            probs = rng.dirichlet(np.ones(6))
            dists.append(WeightedIntDist(support, probs / probs.sum()))
        for a in dists:
            assert kolmogorov(a, a) <= 1e-15
        for a in dists:
            for b in dists:
                assert kolmogorov(a, b) == pytest.approx(kolmogorov(b, a), abs=1e-15)
                for c in dists:
                    assert (
                        kolmogorov(a, c)
                        <= kolmogorov(a, b) + kolmogorov(b, c) + 1e-12
                    )


class TestOspa:
    def test_identical_sets(self, rng):
        pts = rng.uniform(0, 100, size=(5, 2))
        assert ospa(pts, pts, 10.0, 1.0) == 0.0

    def test_one_empty(self):
        assert ospa(np.zeros((0, 2)), np.array([[1.0, 2.0]]), 10.0, 1.0) == 10.0
        assert ospa(np.array([[1.0, 2.0]]), np.zeros((0, 2)), 10.0, 1.0) == 10.0

    def test_both_empty(self):
        assert ospa(np.zeros((0, 2)), np.zeros((0, 2)), 10.0, 1.0) == 0.0

    def test_euclidean_below_cutoff(self):
        assert ospa(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]]), 10.0, 1.0) == 5.0

    def test_cutoff_saturation(self):
        assert ospa(np.array([[0.0, 0.0]]), np.array([[300.0, 400.0]]), 10.0, 1.0) == 10.0

    def test_cardinality_penalty(self):
        # One matched pair at distance 0, one unmatched point: (0 + c)/2.
        X = np.array([[0.0, 0.0]])
        Y = np.array([[0.0, 0.0], [100.0, 100.0]])
        assert ospa(X, Y, 10.0, 1.0) == 5.0

    def test_invalid_cutoff(self):
        with pytest.raises(ValueError):
            ospa(np.zeros((1, 2)), np.zeros((1, 2)), 0.0, 1.0)
        with pytest.raises(ValueError):
            ospa(np.zeros((1, 2)), np.zeros((1, 2)), 1.0, 0.5)

    def test_metric_axioms_random_triples(self, rng):
        for order in (1.0, 2.0):
            sets = [
                rng.uniform(0, 20, size=(int(rng.integers(0, 5)), 2))
                for _ in range(15)
            ]
            for a in sets:
                for b in sets:
                    dab = ospa(a, b, 10.0, order)
                    assert dab == pytest.approx(ospa(b, a, 10.0, order), abs=1e-9)
                    assert dab <= 10.0 + 1e-12
                    for c in sets:
                        assert dab <= (
                            ospa(a, c, 10.0, order) + ospa(c, b, 10.0, order) + 1e-9
                        )

    def test_never_exceeds_cutoff_and_saturates(self, rng):
        X = rng.uniform(0, 5, size=(3, 2))
        Y = X + 1000.0
        extra = np.vstack([Y, [[5000.0, 5000.0]]])
        assert ospa(X, extra, 10.0, 1.0) == pytest.approx(10.0)


class TestPsrf:
    def test_identical_constant_chains(self):
        chains = [np.full(100, 2.5) for _ in range(3)]
        assert psrf(chains) == 1.0

    def test_constant_chains_different_values(self):
        assert psrf([np.full(100, 1.0), np.full(100, 2.0)]) == math.inf

    def test_iid_chains_near_one(self):
        rng = np.random.default_rng(123)
        chains = [rng.standard_normal(10_000) for _ in range(4)]
        value = psrf(chains)
        assert 0.99 <= value <= 1.01

    def test_diverged_chains_large(self):
        rng = np.random.default_rng(5)
        chains = [rng.standard_normal(500), rng.standard_normal(500) + 10.0]
        assert psrf(chains) > 2.0

    def test_affine_invariance(self):
        rng = np.random.default_rng(17)
        chains = [rng.standard_normal(400) for _ in range(3)]
        base = psrf(chains)
        moved = psrf([5.0 - 2.5 * c for c in chains])
        assert moved == pytest.approx(base, rel=1e-10)

    def test_multivariate_per_parameter(self):
        rng = np.random.default_rng(29)
        chains = [rng.standard_normal((1000, 3)) for _ in range(4)]
        values = psrf(chains)
        assert values.shape == (3,)
        assert np.all((values > 0.98) & (values < 1.02))

    def test_validation(self):
        with pytest.raises(ValueError):
            psrf([np.zeros(10)])
        with pytest.raises(ValueError):
            psrf([np.zeros(3), np.zeros(3)])
        with pytest.raises(ValueError):
            psrf([np.zeros(10), np.zeros(11)])


class TestEss:
    def test_uniform(self):
        assert ess(np.full(20, 0.05)) == pytest.approx(20.0)

    def test_degenerate(self):
        assert ess([1.0]) == pytest.approx(1.0)
        assert ess([1.0, 0.0, 0.0]) == pytest.approx(1.0)

    def test_half_weights(self):
        assert ess([0.5, 0.5, 0.0, 0.0]) == pytest.approx(2.0)


class TestConvergenceCurve:
    def test_self_distance_near_zero(self):
        rng = np.random.default_rng(31)
        counts = rng.integers(4, 7, size=400)
        trace = make_trace(counts)
        reference = num_targets_dist(trace, start=200)
        curve = convergence_curve([trace], reference, [400])
        calls, dist = curve[-1]
        assert dist <= 0.02
        assert calls == trace.kalman_calls[-1]

    def test_zero_cut_distance_one(self):
        trace = make_trace([3, 3, 3, 3])
        curve = convergence_curve([trace], point_mass(3), [0, 4])
        assert curve[0] == (0, 1.0)
        assert curve[1][1] == 0.0

    def test_cut_beyond_length_clipped(self):
        trace = make_trace([3] * 10)
        with pytest.warns(UserWarning):
            curve = convergence_curve([trace], point_mass(3), [50])
        assert curve[0][1] == 0.0

    def test_pools_across_chains(self):
        t1 = make_trace([1] * 100)
        t2 = make_trace([2] * 100)
        curve = convergence_curve([t1, t2], point_mass(1), [100])
        # Pooled halves are 50/50 over {1, 2}: CDF gap 0.5 at value 1.
        assert curve[0][1] == pytest.approx(0.5)
        assert curve[0][0] == t1.kalman_calls[-1] + t2.kalman_calls[-1]
