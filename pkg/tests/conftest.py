"""Shared fixtures and independent oracles.

The enumeration oracle recomputes everything the filter is supposed to
estimate on a tiny three-measurement problem by brute force and by
independent code paths: assignment priors via exact rational arithmetic
over the latent target count, and per-history likelihoods via the stacked
joint Gaussian of each target's measurement chain evaluated with scipy.
Nothing here calls the package's Kalman or prior routines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from rbmcda import FilterConfig, ModelParams, ObservationStats
from rbmcda.association import AssocPriorConfig


# ---------------------------------------------------------------------------
# Independent model pieces (recomputed from the closed forms, not imported).


def oracle_transition(theta: ModelParams, dt: float):
    """Closed-form transition of [home, position] blocks over dt."""
    decay = math.exp(-theta.lam * dt)
    var = theta.q / (2.0 * theta.lam) * (1.0 - math.exp(-2.0 * theta.lam * dt))
    A = np.eye(4)
    A[2, 2] = A[3, 3] = decay
    A[2, 0] = A[3, 1] = 1.0 - decay
    Q = np.diag([0.0, 0.0, var, var])
    return A, Q


def oracle_birth(theta: ModelParams, ys: np.ndarray):
    """Birth density from the empirical observation moments."""
    ybar = ys.mean(axis=0)
    sig = np.cov(ys, rowvar=False, ddof=1)
    ss = theta.q / (2.0 * theta.lam) * np.eye(2)
    mean = np.concatenate([ybar, ybar])
    cov = np.block([[sig, sig], [sig, sig + ss]])
    return mean, cov


def oracle_chain_loglik(times, ys, theta: ModelParams, all_ys) -> float:
    """Joint-Gaussian log-likelihood of one target's measurement chain.

    Builds the stacked covariance of the target states at its own
    measurement times by forward recursion and evaluates the measurement
    joint with scipy.
    """
    times = np.asarray(times, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = times.size
    m0, P0 = oracle_birth(theta, all_ys)
    H = np.zeros((2, 4))
    H[0, 2] = H[1, 3] = 1.0
    R = theta.sigma**2 * np.eye(2)

    marginals = [P0]
    means = [m0]
    for i in range(1, n):
        A, Q = oracle_transition(theta, times[i] - times[i - 1])
        marginals.append(A @ marginals[-1] @ A.T + Q)
        means.append(A @ means[-1])
    blocks = [[None] * n for _ in range(n)]
    for i in range(n):
        blocks[i][i] = marginals[i]
        for j in range(i + 1, n):
            A, _ = oracle_transition(theta, times[j] - times[i])
            blocks[i][j] = marginals[i] @ A.T
            blocks[j][i] = blocks[i][j].T
    state_cov = np.block(blocks)
    lift = np.kron(np.eye(n), H)
    obs_cov = lift @ state_cov @ lift.T + np.kron(np.eye(n), R)
    obs_mean = lift @ np.concatenate(means)
    return float(
        multivariate_normal(mean=obs_mean, cov=obs_cov, allow_singular=False).logpdf(
            ys.ravel()
        )
    )


def oracle_history_loglik(times, ys, theta: ModelParams, history) -> float:
    """Likelihood of a full assignment history: product over target chains
    (clutter-free histories only)."""
    groups: dict[int, list[int]] = {}
    for idx, c in enumerate(history):
        assert c > 0, "oracle handles clutter-free histories only"
        groups.setdefault(c, []).append(idx)
    total = 0.0
    for idxs in groups.values():
        total += oracle_chain_loglik(
            np.asarray(times)[idxs], np.asarray(ys)[idxs], theta, np.asarray(ys)
        )
    return total


def oracle_new_target_prob(k: int, n_seen: int, support: int) -> Fraction:
    """Exact rational new-target probability under the latent-count prior."""
    if n_seen == 0:
        return Fraction(1)
    num = Fraction(0)
    den = Fraction(0)
    for count in range(1, support + 1):
        if count < n_seen:
            continue
        lik = Fraction(1)
        for i in range(n_seen):
            lik *= count - i
        lik = Fraction(lik, count ** (k - 1))
        den += lik
        num += lik * Fraction(count - n_seen, count)
    return num / den if den else Fraction(0)


def oracle_history_log_prior(history, support: int) -> float:
    """Exact log prior of a clutter-free canonical history (no deaths)."""
    prob = Fraction(1)
    n_seen = 0
    for k, c in enumerate(history, start=1):
        birth = oracle_new_target_prob(k, n_seen, support)
        if c == n_seen + 1:
            prob *= birth
            n_seen += 1
        else:
            assert 1 <= c <= n_seen
            prob *= (1 - birth) / n_seen
        if prob == 0:
            return -math.inf
    return math.log(prob)


def canonical_histories(n_obs: int) -> list[tuple[int, ...]]:
    """All clutter-free canonical assignment histories of a given length."""
    out: list[tuple[int, ...]] = []

    def extend(prefix: tuple[int, ...], top: int):
        if len(prefix) == n_obs:
            out.append(prefix)
            return
        for c in range(1, top + 2):
            extend(prefix + (c,), max(top, c))

    extend((), 0)
    return out


@dataclass
class EnumerationOracle:
    """Exact posterior over assignment histories of a tiny scenario."""

    times: np.ndarray
    ys: np.ndarray
    theta: ModelParams
    cfg: FilterConfig
    stats: ObservationStats
    histories: list[tuple[int, ...]]
    log_prior: dict[tuple[int, ...], float]
    log_lik: dict[tuple[int, ...], float]
    posterior: dict[tuple[int, ...], float]
    log_marginal: float

    @property
    def obs(self):
        return (self.times, self.ys)

    def posterior_dist(self) -> tuple[list[tuple[int, ...]], np.ndarray]:
        return self.histories, np.array([self.posterior[h] for h in self.histories])

    def sample_history(self, rng) -> tuple[int, ...]:
        _, probs = self.posterior_dist()
        return self.histories[rng.choice(len(self.histories), p=probs)]

    def count_posterior(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for h in self.histories:
            out[max(h)] = out.get(max(h), 0.0) + self.posterior[h]
        return out


def build_enumeration_oracle(times, ys, theta, cfg=None) -> EnumerationOracle:
    times = np.asarray(times, dtype=float)
    ys = np.asarray(ys, dtype=float)
    cfg = cfg if cfg is not None else FilterConfig()
    support = times.size
    histories = canonical_histories(times.size)
    log_prior = {h: oracle_history_log_prior(h, support) for h in histories}
    log_lik = {h: oracle_history_loglik(times, ys, theta, h) for h in histories}
    joint = {h: log_prior[h] + log_lik[h] for h in histories}
    top = max(joint.values())
    unnorm = {h: math.exp(v - top) for h, v in joint.items()}
    total = sum(unnorm.values())
    posterior = {h: v / total for h, v in unnorm.items()}
    log_marginal = top + math.log(total)
    return EnumerationOracle(
        times=times,
        ys=ys,
        theta=theta,
        cfg=cfg,
        stats=ObservationStats.from_observations(ys),
        histories=histories,
        log_prior=log_prior,
        log_lik=log_lik,
        posterior=posterior,
        log_marginal=log_marginal,
    )


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


# ---------------------------------------------------------------------------
# Fixtures.


THREE_OBS_TIMES = np.array([0.0, 0.35, 0.8])
THREE_OBS_YS = np.array([[0.0, 0.0], [2.0, 0.8], [0.7, 2.2]])
THREE_OBS_THETA = ModelParams(q=6.0, lam=0.6, sigma=1.2)


@pytest.fixture(scope="session")
def three_obs() -> EnumerationOracle:
    """Three measurements, five canonical histories, exact posterior."""
    return build_enumeration_oracle(THREE_OBS_TIMES, THREE_OBS_YS, THREE_OBS_THETA)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def make_forced_single_cfg() -> FilterConfig:
    """Assignment prior that pins every measurement to target 1."""
    return FilterConfig(
        assoc=AssocPriorConfig(new_target_rule="fixed", fixed_new_prob=0.0)
    )


@pytest.fixture()
def forced_single_cfg() -> FilterConfig:
    return make_forced_single_cfg()
