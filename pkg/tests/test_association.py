import math

import numpy as np
import pytest

from conftest import oracle_new_target_prob
from rbmcda.association import (
    AssocHistorySummary,
    AssocPriorConfig,
    apply_deaths,
    assoc_prior,
    clutter_loglik,
    history_log_prior,
    history_summary,
    new_target_prob,
)


def summary_with(k, total, visible, last_seen=None):
    visible = np.asarray(visible, dtype=bool)
    if last_seen is None:
        last_seen = np.zeros(visible.size)
    return AssocHistorySummary(
        k=k, total_obs=total, visible=visible, last_seen=np.asarray(last_seen, float)
    )


class TestAssocPrior:
    def test_first_measurement_opens_target(self):
        probs = assoc_prior(AssocHistorySummary.empty(10), AssocPriorConfig())
        np.testing.assert_array_equal(probs, [0.0, 1.0])

    def test_two_observation_example(self):
        # k=2, M=2, one target seen: enumerating the latent count gives
        # P(new) = 1/4 and P(target 1) = 3/4.
        probs = assoc_prior(summary_with(2, 2, [True]), AssocPriorConfig())
        np.testing.assert_allclose(probs, [0.0, 0.75, 0.25])

    def test_clutter_mass_split(self):
        probs = assoc_prior(
            AssocHistorySummary.empty(5),
            AssocPriorConfig(clutter_prob=0.1, clutter_density=1e-4),
        )
        np.testing.assert_allclose(probs, [0.1, 0.9])

    def test_proper_distribution(self, rng):
        cfg = AssocPriorConfig(clutter_prob=0.2, clutter_density=1e-4)
        for _ in range(200):
            total = int(rng.integers(2, 40))
            k = int(rng.integers(1, total + 1))
            n_seen = int(rng.integers(0, k))
            visible = rng.random(n_seen) < 0.7
            probs = assoc_prior(summary_with(k, total, visible), cfg)
            assert probs.min() >= 0.0
            assert abs(probs.sum() - 1.0) < 1e-12
            assert probs.size == n_seen + 2

    def test_invisible_targets_get_zero(self):
        probs = assoc_prior(
            summary_with(4, 10, [True, False, True]), AssocPriorConfig()
        )
        assert probs[2] == 0.0
        assert probs[1] == probs[3] > 0.0

    def test_no_clutter_index_never_positive(self, rng):
        cfg = AssocPriorConfig(clutter_prob=0.0)
        for _ in range(50):
            total = int(rng.integers(2, 20))
            k = int(rng.integers(1, total + 1))
            n_seen = int(rng.integers(0, k))
            probs = assoc_prior(summary_with(k, total, np.ones(n_seen, bool)), cfg)
            assert probs[0] == 0.0

    def test_all_dead_forces_new(self):
        probs = assoc_prior(
            summary_with(3, 10, [False, False]),
            AssocPriorConfig(clutter_prob=0.25, clutter_density=1.0),
        )
        np.testing.assert_allclose(probs, [0.25, 0.0, 0.0, 0.75])

    def test_fixed_rule(self):
        cfg = AssocPriorConfig(new_target_rule="fixed", fixed_new_prob=0.3)
        probs = assoc_prior(summary_with(3, 10, [True, True]), cfg)
        np.testing.assert_allclose(probs, [0.0, 0.35, 0.35, 0.3])

    def test_latent_count_override(self):
        base = assoc_prior(summary_with(2, 2, [True]), AssocPriorConfig())
        widened = assoc_prior(
            summary_with(2, 2, [True]), AssocPriorConfig(latent_count_max=100)
        )
        assert widened[-1] > base[-1]


class TestNewTargetProb:
    def test_matches_exact_enumeration_exhaustively(self):
        # Direct rational enumeration over the latent count, all
        # 1 <= n_seen < k <= M <= 30.
        for total in range(1, 31):
            for k in range(2, total + 1):
                for n_seen in range(1, k):
                    exact = float(oracle_new_target_prob(k, n_seen, total))
                    got = new_target_prob(k, n_seen, total)
                    assert got == pytest.approx(exact, rel=1e-12, abs=1e-15)

    def test_no_targets_seen(self):
        assert new_target_prob(1, 0, 10) == 1.0
        assert new_target_prob(5, 0, 10) == 1.0

    def test_claimed_monotonicity_in_targets_seen_is_false(self):
        # Documented defect: the new-target probability is unimodal in the
        # number of targets seen, not decreasing. Seeing more distinct
        # targets is evidence for a larger latent count, which raises the
        # probability until depletion takes over. Exact enumeration gives
        # the counterexample below; see the project notes.
        low = float(oracle_new_target_prob(4, 1, 4))
        high = float(oracle_new_target_prob(4, 2, 4))
        assert high > low
        assert new_target_prob(4, 2, 4) > new_target_prob(4, 1, 4)

    def test_support_exhausted(self):
        assert new_target_prob(4, 3, 3) < new_target_prob(4, 2, 3)
        assert new_target_prob(2, 1, 1) == 0.0


class TestClutterLoglik:
    def test_uniform_inside(self):
        cfg = AssocPriorConfig(window=(0.0, 100.0, 0.0, 100.0))
        assert clutter_loglik(np.array([50.0, 50.0]), cfg) == pytest.approx(
            math.log(1e-4)
        )

    def test_uniform_outside(self):
        cfg = AssocPriorConfig(window=(0.0, 100.0, 0.0, 100.0))
        assert clutter_loglik(np.array([150.0, 50.0]), cfg) == -math.inf

    def test_constant_density(self):
        cfg = AssocPriorConfig(clutter_density=0.5)
        for y in ([0.0, 0.0], [1e6, -1e6]):
            assert clutter_loglik(np.array(y), cfg) == pytest.approx(math.log(0.5))


class TestDeaths:
    def test_disabled_is_identity(self):
        summary = summary_with(5, 10, [True, True], [0.0, 3.0])
        assert apply_deaths(summary, 100.0, AssocPriorConfig()) is summary

    def test_expired_target_marked(self):
        cfg = AssocPriorConfig(death_threshold=1.0)
        summary = summary_with(5, 10, [True, True], [1.0, 2.9])
        out = apply_deaths(summary, 3.0, cfg)
        np.testing.assert_array_equal(out.visible, [False, True])

    def test_boundary_is_strict(self):
        cfg = AssocPriorConfig(death_threshold=1.0)
        summary = summary_with(5, 10, [True], [2.0])
        out = apply_deaths(summary, 3.0, cfg)
        assert out.visible[0]

    def test_never_revives(self, rng):
        cfg = AssocPriorConfig(death_threshold=0.5)
        summary = summary_with(5, 10, [False, True], [10.0, 10.0])
        for now in [0.0, 5.0, 10.2, 11.0]:
            summary = apply_deaths(summary, now, cfg)
            assert not summary.visible[0]


class TestSummary:
    def test_advance_new_target(self):
        summary = AssocHistorySummary.empty(5)
        out = summary.advanced(1, 0.3)
        assert out.k == 2 and out.n_seen == 1
        np.testing.assert_array_equal(out.visible, [True])
        np.testing.assert_array_equal(out.last_seen, [0.3])

    def test_advance_existing_updates_last_seen(self):
        summary = summary_with(3, 5, [True, True], [0.1, 0.2])
        out = summary.advanced(1, 0.9)
        np.testing.assert_array_equal(out.last_seen, [0.9, 0.2])
        assert out.k == 4

    def test_advance_clutter_changes_only_k(self):
        summary = summary_with(3, 5, [True], [0.1])
        out = summary.advanced(0, 0.9)
        assert out.k == 4 and out.n_seen == 1
        np.testing.assert_array_equal(out.last_seen, [0.1])

    def test_advance_rejects_gap_label(self):
        with pytest.raises(ValueError):
            AssocHistorySummary.empty(5).advanced(2, 0.1)

    def test_validate(self):
        with pytest.raises(ValueError):
            summary_with(1, 5, [True], [0.0]).validate()


class TestHistoryPrior:
    def test_three_obs_matches_oracle(self, three_obs):
        for hist in three_obs.histories:
            got = history_log_prior(
                three_obs.times, hist, 3, AssocPriorConfig()
            )
            assert got == pytest.approx(three_obs.log_prior[hist], rel=1e-12)

    def test_death_zeroes_prior(self):
        # The death sweep runs after each measurement, so target 1 is only
        # retired once the sweep at t=1 sees it stale; re-associating it at
        # t=2 then has zero prior mass. Continuous re-association (1,1,1)
        # keeps refreshing last_seen and stays legal.
        cfg = AssocPriorConfig(death_threshold=0.1)
        times = np.array([0.0, 1.0, 2.0])
        assert history_log_prior(times, (1, 2, 1), 3, cfg) == -math.inf
        assert history_log_prior(times, (1, 1, 1), 3, cfg) > -math.inf
        assert history_log_prior(times, (1, 2, 3), 3, cfg) > -math.inf

    def test_summary_walk(self):
        cfg = AssocPriorConfig(death_threshold=0.5)
        times = np.array([0.0, 0.2, 1.5])
        summary = history_summary(times, (1, 2, 2), 3, cfg)
        assert summary.n_seen == 2
        np.testing.assert_array_equal(summary.visible, [False, True])
