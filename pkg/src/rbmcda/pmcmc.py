"""MCMC samplers for the static model parameters.

Two chains over the sampling parameterization (sqrt_q, lam, sigma):

* marginal Metropolis-Hastings (``pmmh``): each proposal is scored by a
  fresh filter run whose marginal-likelihood estimate stands in for the
  intractable likelihood. Occupancy weights let the particle populations
  of rejected proposals contribute to posterior summaries.
* Metropolis-within-Gibbs (``pgibbs``): alternates an exact
  Metropolis-Hastings update of the parameters given the retained
  assignment history with a conditional filter pass that renews the
  history, optionally followed by single-assignment Gibbs refresh moves.

Proposals are symmetric Gaussian random walks whose covariance adapts to
the sample covariance of the chain during a warmup window and is frozen
afterwards. Priors are independent Gamma distributions with shape 2, one
mode per parameter.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .association import PriorWalker, history_summary
from .filter import (
    DegenerateFilterError,
    FilterConfig,
    ParticleSet,
    chain_loglik,
    _clutter_ll,
    _obs_arrays,
    assoc_loglik,
    conditional_rbmcda,
    rbmcda_filter,
    validate_history,
)
from .gaussians import KalmanCallCounter
from .oumodel import PARAM_NAMES, ModelParams, ObservationStats

__all__ = [
    "PriorSpec",
    "ProposalState",
    "Trace",
    "prior_logpdf",
    "propose",
    "adapt",
    "pmmh",
    "pgibbs",
    "refresh_associations",
]

# Random-walk scale of the adapted covariance, squared per dimension.
ADAPT_SCALE = 2.4


@dataclass(frozen=True)
class PriorSpec:
    """Independent Gamma priors with shape 2 over (sqrt_q, lam, sigma).

    Shape 2 makes the scale equal to the mode, so each prior is pinned by
    its mode alone.
    """

    modes: tuple[float, float, float]

    def __post_init__(self):
        if len(self.modes) != len(PARAM_NAMES):
            raise ValueError(f"need {len(PARAM_NAMES)} prior modes")
        if any(m <= 0.0 for m in self.modes):
            raise ValueError("prior modes must be strictly positive")


def _gamma2_logpdf(x: float, scale: float) -> float:
    if x <= 0.0:
        return -math.inf
    return math.log(x) - x / scale - 2.0 * math.log(scale)


def _prior_logpdf_vec(vec: np.ndarray, spec: PriorSpec) -> float:
    return sum(_gamma2_logpdf(float(x), s) for x, s in zip(vec, spec.modes))


def prior_logpdf(theta: ModelParams, spec: PriorSpec) -> float:
    """Joint log prior density of the parameters; -inf off the support."""
    return _prior_logpdf_vec(theta.to_vector(), spec)


@dataclass
class ProposalState:
    """Adaptive Gaussian random-walk proposal.

    The covariance is replaced by (ADAPT_SCALE/d)^2 times the running
    sample covariance of the chain (plus a jitter ridge) for iterations
    inside [adapt_start, adapt_end] and frozen outside that window. The
    running moments themselves are updated every iteration.
    """

    cov: np.ndarray
    adapt_start: int
    adapt_end: int
    jitter: float = 1e-10
    count: int = 0
    running_mean: np.ndarray | None = None
    scatter: np.ndarray | None = None
    _chol: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def initial(
        cls,
        step_sizes: np.ndarray,
        adapt_start: int,
        adapt_end: int,
        jitter: float = 1e-10,
    ) -> "ProposalState":
        step_sizes = np.asarray(step_sizes, dtype=float)
        return cls(
            cov=np.diag(step_sizes**2),
            adapt_start=adapt_start,
            adapt_end=adapt_end,
            jitter=jitter,
        )

    def cholesky(self) -> np.ndarray:
        if self._chol is None:
            self._chol = np.linalg.cholesky(self.cov)
        return self._chol


def propose(
    vec: np.ndarray, ps: ProposalState, rng: np.random.Generator
) -> np.ndarray:
    """Symmetric Gaussian random-walk step from vec."""
    vec = np.asarray(vec, dtype=float)
    return vec + ps.cholesky() @ rng.standard_normal(vec.size)


def adapt(ps: ProposalState, value: np.ndarray, iteration: int) -> ProposalState:
    """Absorb a new chain state into the running moments; refresh the
    proposal covariance only inside the adaptation window."""
    value = np.asarray(value, dtype=float)
    if ps.running_mean is None:
        ps.running_mean = value.copy()
        ps.scatter = np.zeros((value.size, value.size))
        ps.count = 1
    else:
        ps.count += 1
        delta = value - ps.running_mean
        ps.running_mean = ps.running_mean + delta / ps.count
        ps.scatter = ps.scatter + np.outer(delta, value - ps.running_mean)
    if ps.adapt_start <= iteration <= ps.adapt_end and ps.count >= 2:
        d = value.size
        sample_cov = ps.scatter / (ps.count - 1)
        ps.cov = (ADAPT_SCALE / d) ** 2 * sample_cov + ps.jitter * np.eye(d)
        ps._chol = None
    return ps


@dataclass
class Trace:
    """Per-iteration output of one chain (row 0 is the initial state).

    ``occupancy`` holds the marginal-MH occupancy weights (all ones for
    the Gibbs variant); they sum to the number of iterations. For the
    marginal-MH chain the per-iteration proposed particle populations are
    summarized by ``particle_counts_*`` and ``particle_weights`` so that
    occupancy-weighted estimates can be formed later. ``kalman_calls``
    stamps the cumulative evaluation count after each iteration.
    """

    algorithm: str
    param_names: tuple[str, ...]
    thetas: np.ndarray
    log_liks: np.ndarray
    log_priors: np.ndarray
    accepted: np.ndarray
    occupancy: np.ndarray
    histories: list[tuple[int, ...]]
    n_alive: np.ndarray
    n_seen: np.ndarray
    kalman_calls: np.ndarray
    proposal_covs: np.ndarray
    particle_counts_alive: np.ndarray | None = None
    particle_counts_seen: np.ndarray | None = None
    particle_weights: np.ndarray | None = None
    degenerate_rejects: int = 0
    chain_id: int = 0

    @property
    def iterations(self) -> int:
        return self.thetas.shape[0] - 1

    def acceptance_rate(self) -> float:
        return float(self.accepted[1:].mean()) if self.iterations else 0.0


def _draw_particle(pset: ParticleSet, rng: np.random.Generator) -> int:
    w = pset.weights()
    cum = np.cumsum(w / w.sum())
    cum[-1] = 1.0
    return int(
        min(np.searchsorted(cum, rng.random(), side="right"), len(cum) - 1)
    )


def _sampler_setup(theta0, prior, sample_params, iterations, adapt_start, adapt_end,
                   adapt_jitter, initial_step_frac):
    sample_idx = np.array([PARAM_NAMES.index(name) for name in sample_params], dtype=int)
    if sample_idx.size == 0:
        raise ValueError("need at least one sampled parameter")
    theta_vec = theta0.to_vector()
    modes = np.asarray(prior.modes, dtype=float)
    end = iterations // 2 if adapt_end is None else adapt_end
    ps = ProposalState.initial(
        initial_step_frac * modes[sample_idx], adapt_start, end, adapt_jitter
    )
    return sample_idx, theta_vec, ps


def _alloc_trace(algorithm, iterations, d):
    return dict(
        thetas=np.zeros((iterations + 1, len(PARAM_NAMES))),
        log_liks=np.zeros(iterations + 1),
        log_priors=np.zeros(iterations + 1),
        accepted=np.zeros(iterations + 1, dtype=bool),
        occupancy=np.zeros(iterations + 1),
        histories=[()] * (iterations + 1),
        n_alive=np.zeros(iterations + 1, dtype=int),
        n_seen=np.zeros(iterations + 1, dtype=int),
        kalman_calls=np.zeros(iterations + 1, dtype=np.int64),
        proposal_covs=np.zeros((iterations + 1, d, d)),
    )


def pmmh(
    obs,
    theta0: ModelParams,
    n_particles: int,
    iterations: int,
    prior: PriorSpec,
    cfg: FilterConfig | None = None,
    rng: np.random.Generator | None = None,
    *,
    adapt_start: int = 100,
    adapt_end: int | None = None,
    adapt_jitter: float = 1e-10,
    initial_step_frac: float = 0.1,
    sample_params: tuple[str, ...] = PARAM_NAMES,
    stats: ObservationStats | None = None,
    loglik_offset: float = 0.0,
    chain_id: int = 0,
) -> Trace:
    """Marginal Metropolis-Hastings over the parameters.

    Each iteration proposes a random-walk step, scores it with a fresh
    filter run, and accepts with the usual ratio (the proposal density
    cancels by symmetry). A degenerate filter run counts as likelihood
    zero and is auto-rejected.
    """
    if iterations < 1 or n_particles < 1:
        raise ValueError("iterations and n_particles must be positive")
    cfg = cfg if cfg is not None else FilterConfig()
    rng = rng if rng is not None else np.random.default_rng()
    times, ys = _obs_arrays(obs)
    if stats is None:
        stats = ObservationStats.from_observations(ys)
    sample_idx, theta_vec, ps = _sampler_setup(
        theta0, prior, sample_params, iterations, adapt_start, adapt_end,
        adapt_jitter, initial_step_frac,
    )
    counter = KalmanCallCounter()
    out = _alloc_trace("pmmh", iterations, sample_idx.size)
    counts_alive = np.zeros((iterations + 1, n_particles), dtype=int)
    counts_seen = np.zeros((iterations + 1, n_particles), dtype=int)
    pweights = np.zeros((iterations + 1, n_particles))
    degenerate = 0

    def record_set(i, pset):
        counts_alive[i] = [p.n_alive for p in pset.particles]
        counts_seen[i] = [p.n_seen for p in pset.particles]
        pweights[i] = pset.weights()

    pset_curr, ll_curr = rbmcda_filter(
        (times, ys), theta0, n_particles, cfg, rng, stats, counter
    )
    ll_curr += loglik_offset
    lp_curr = _prior_logpdf_vec(theta_vec, prior)
    lastaccept = 0
    adapt(ps, theta_vec[sample_idx], 0)

    def record_state(i, pset):
        out["thetas"][i] = theta_vec
        out["log_liks"][i] = ll_curr
        out["log_priors"][i] = lp_curr
        out["proposal_covs"][i] = ps.cov
        out["kalman_calls"][i] = counter.total
        pick = pset.particles[_draw_particle(pset, rng)]
        out["histories"][i] = pick.assoc_history
        out["n_alive"][i] = pick.n_alive
        out["n_seen"][i] = pick.n_seen

    out["accepted"][0] = True
    record_set(0, pset_curr)
    record_state(0, pset_curr)

    for i in range(1, iterations + 1):
        vec_star = theta_vec.copy()
        vec_star[sample_idx] = propose(theta_vec[sample_idx], ps, rng)
        lp_star = _prior_logpdf_vec(vec_star, prior)
        pset_star = None
        ll_star = -math.inf
        if lp_star > -math.inf:
            try:
                pset_star, ll_star = rbmcda_filter(
                    (times, ys), ModelParams.from_vector(vec_star),
                    n_particles, cfg, rng, stats, counter,
                )
                ll_star += loglik_offset
            except DegenerateFilterError:
                degenerate += 1
                pset_star = None
                ll_star = -math.inf
        if ll_star + lp_star == -math.inf:
            alpha = 0.0
        else:
            alpha = math.exp(min(0.0, (ll_star + lp_star) - (ll_curr + lp_curr)))
        out["occupancy"][i] = alpha
        out["occupancy"][lastaccept] += 1.0 - alpha
        if pset_star is not None:
            record_set(i, pset_star)
        if rng.random() < alpha:
            theta_vec, ll_curr, lp_curr = vec_star, ll_star, lp_star
            pset_curr = pset_star
            lastaccept = i
            out["accepted"][i] = True
        adapt(ps, theta_vec[sample_idx], i)
        record_state(i, pset_curr)

    return Trace(
        algorithm="pmmh",
        param_names=PARAM_NAMES,
        particle_counts_alive=counts_alive,
        particle_counts_seen=counts_seen,
        particle_weights=pweights,
        degenerate_rejects=degenerate,
        chain_id=chain_id,
        **out,
    )


def pgibbs(
    obs,
    theta0: ModelParams,
    n_particles: int,
    iterations: int,
    prior: PriorSpec,
    cfg: FilterConfig | None = None,
    rng: np.random.Generator | None = None,
    *,
    adapt_start: int = 100,
    adapt_end: int | None = None,
    adapt_jitter: float = 1e-10,
    initial_step_frac: float = 0.1,
    sample_params: tuple[str, ...] = PARAM_NAMES,
    refresh: bool = True,
    refresh_count: int | None = None,
    fix_parameters: bool = False,
    stats: ObservationStats | None = None,
    loglik_offset: float = 0.0,
    chain_id: int = 0,
) -> Trace:
    """Metropolis-within-Gibbs over parameters and assignment histories.

    Each iteration (a) updates the parameters by one Metropolis-Hastings
    step against the exact likelihood of the retained history, (b) renews
    the history with a conditional filter pass clamped to it, (c) draws
    the new retained history from the final weights, and (d) optionally
    redraws a few single assignments from their full conditionals.

    ``fix_parameters`` skips step (a), leaving the parameters at their
    initial values (the no-estimation baseline).
    """
    if iterations < 1 or n_particles < 1:
        raise ValueError("iterations and n_particles must be positive")
    if n_particles == 1 and not refresh:
        warnings.warn(
            "with one particle and no refresh moves the assignment history "
            "can never change", RuntimeWarning, stacklevel=2,
        )
    cfg = cfg if cfg is not None else FilterConfig()
    rng = rng if rng is not None else np.random.default_rng()
    times, ys = _obs_arrays(obs)
    total_obs = times.size
    if stats is None:
        stats = ObservationStats.from_observations(ys)
    sample_idx, theta_vec, ps = _sampler_setup(
        theta0, prior, sample_params, iterations, adapt_start, adapt_end,
        adapt_jitter, initial_step_frac,
    )
    n_refresh = (
        refresh_count if refresh_count is not None else math.ceil(total_obs / 10)
    )
    counter = KalmanCallCounter()
    out = _alloc_trace("pgibbs", iterations, sample_idx.size)
    out["occupancy"][:] = 1.0
    out["occupancy"][0] = 0.0

    pset, _ = rbmcda_filter(
        (times, ys), theta0, n_particles, cfg, rng, stats, counter
    )
    pick = pset.particles[_draw_particle(pset, rng)]
    retained = pick.assoc_history
    ll_curr = pick.cond_loglik + loglik_offset
    lp_curr = _prior_logpdf_vec(theta_vec, prior)
    n_alive, n_seen = pick.n_alive, pick.n_seen
    if not fix_parameters:
        adapt(ps, theta_vec[sample_idx], 0)

    def record(i):
        out["thetas"][i] = theta_vec
        out["log_liks"][i] = ll_curr
        out["log_priors"][i] = lp_curr
        out["proposal_covs"][i] = ps.cov
        out["kalman_calls"][i] = counter.total
        out["histories"][i] = retained
        out["n_alive"][i] = n_alive
        out["n_seen"][i] = n_seen

    out["accepted"][0] = True
    record(0)

    for i in range(1, iterations + 1):
        if not fix_parameters:
            vec_star = theta_vec.copy()
            vec_star[sample_idx] = propose(theta_vec[sample_idx], ps, rng)
            lp_star = _prior_logpdf_vec(vec_star, prior)
            if lp_star > -math.inf:
                ll_star = (
                    assoc_loglik(
                        (times, ys), ModelParams.from_vector(vec_star),
                        retained, cfg, stats, counter,
                    )
                    + loglik_offset
                )
            else:
                ll_star = -math.inf
            if ll_star + lp_star > -math.inf and rng.random() < math.exp(
                min(0.0, (ll_star + lp_star) - (ll_curr + lp_curr))
            ):
                theta_vec, ll_curr, lp_curr = vec_star, ll_star, lp_star
                out["accepted"][i] = True
        theta = ModelParams.from_vector(theta_vec)
        pset = conditional_rbmcda(
            (times, ys), theta, n_particles, retained, cfg, rng, stats, counter
        )
        pick = pset.particles[_draw_particle(pset, rng)]
        retained = pick.assoc_history
        ll_curr = pick.cond_loglik + loglik_offset
        n_alive, n_seen = pick.n_alive, pick.n_seen
        if refresh and n_refresh > 0:
            indices = rng.integers(0, total_obs, size=n_refresh)
            retained, raw_ll = refresh_associations(
                (times, ys), theta, retained, indices, cfg, rng, stats, counter
            )
            ll_curr = raw_ll + loglik_offset
            summary = history_summary(times, retained, total_obs, cfg.assoc)
            n_alive, n_seen = summary.n_visible, summary.n_seen
        if not fix_parameters:
            adapt(ps, theta_vec[sample_idx], i)
        record(i)

    return Trace(
        algorithm="pgibbs",
        param_names=PARAM_NAMES,
        chain_id=chain_id,
        **out,
    )


def _canonical_relabel(history) -> tuple[int, ...]:
    mapping: dict[int, int] = {}
    out = []
    for c in history:
        if c == 0:
            out.append(0)
        else:
            label = mapping.get(c)
            if label is None:
                label = len(mapping) + 1
                mapping[c] = label
            out.append(label)
    return tuple(out)


def refresh_associations(
    obs,
    theta: ModelParams,
    history,
    indices,
    cfg: FilterConfig | None = None,
    rng: np.random.Generator | None = None,
    stats: ObservationStats | None = None,
    counter: KalmanCallCounter | None = None,
) -> tuple[tuple[int, ...], float]:
    """Redraw selected assignments from their exact full conditionals.

    For each index (in the order given) the candidate set is clutter (when
    enabled), every target appearing elsewhere in the history, and a fresh
    target opened at that measurement; the substituted history is
    relabeled canonically and scored by joint prior times exact
    likelihood. The current value is always among the candidates.

    The likelihood of a candidate factorizes over targets, so only the
    chains touched by the substitution are re-evaluated; per-index-set
    chain likelihoods are memoized across the call.

    Returns the updated history and its exact conditional log-likelihood.
    """
    cfg = cfg if cfg is not None else FilterConfig()
    rng = rng if rng is not None else np.random.default_rng()
    times, ys = _obs_arrays(obs)
    total_obs = times.size
    current = list(validate_history(history, total_obs))
    if stats is None:
        stats = ObservationStats.from_observations(ys)
    acfg = cfg.assoc
    clutter_on = acfg.clutter_prob > 0.0
    clutter_terms = np.array([_clutter_ll(y, acfg) for y in ys])

    chain_cache: dict[tuple[int, ...], float] = {}

    def chain_factor(idxs: tuple[int, ...]) -> float:
        value = chain_cache.get(idxs)
        if value is None:
            value = chain_loglik(
                times[list(idxs)], ys[list(idxs)], theta, stats,
                cfg.birth_block_diagonal, counter,
            )
            chain_cache[idxs] = value
        return value

    def total_loglik(hist) -> float:
        groups: dict[int, list[int]] = {}
        total = 0.0
        for idx, c in enumerate(hist):
            if c == 0:
                total += clutter_terms[idx]
            else:
                groups.setdefault(c, []).append(idx)
        for idxs in groups.values():
            total += chain_factor(tuple(idxs))
        return total

    for k in indices:
        k = int(k)
        if not 0 <= k < total_obs:
            raise ValueError(f"measurement index {k} out of range")
        labels = sorted({c for j, c in enumerate(current) if j != k and c > 0})
        raw = ([0] if clutter_on else []) + labels + [max(labels, default=0) + 1]
        candidates: list[tuple[int, ...]] = []
        seen: set[tuple[int, ...]] = set()
        for v in raw:
            trial = current.copy()
            trial[k] = v
            canon = _canonical_relabel(trial)
            if canon not in seen:
                seen.add(canon)
                candidates.append(canon)

        # Canonical relabeling never touches positions before k, so every
        # candidate shares the current prefix; walk it once.
        prefix = PriorWalker(total_obs, acfg)
        for j in range(k):
            prefix.step(float(times[j]), current[j])

        def prior_score(cand) -> float:
            walker = prefix.copy()
            for j in range(k, total_obs):
                walker.step(float(times[j]), cand[j])
                if walker.logp == -math.inf:
                    return -math.inf
            return walker.logp

        scores = np.array(
            [prior_score(cand) + total_loglik(cand) for cand in candidates]
        )
        top = scores.max()
        if top == -math.inf:
            raise RuntimeError(
                "no assignment candidate has positive posterior mass"
            )
        probs = np.exp(np.where(np.isneginf(scores), -np.inf, scores - top))
        probs /= probs.sum()
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        choice = int(
            min(np.searchsorted(cum, rng.random(), side="right"), len(cum) - 1)
        )
        current = list(candidates[choice])
    final = tuple(current)
    return final, total_loglik(final)
