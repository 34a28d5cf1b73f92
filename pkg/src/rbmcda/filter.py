"""Particle filtering over data-association histories.

Target states are tracked in closed form with Kalman moments; only the
discrete assignment decisions are sampled. Each particle therefore stores
one assignment history together with the per-target Gaussians it implies,
and the proposal for each new measurement is the exact conditional
posterior over the finite candidate set: clutter (when enabled), each
visible target, or a new target.

Particles left identical by resampling are grouped so the Kalman work of a
step is evaluated once per distinct history, and the linear algebra of one
step runs batched across groups. With ``share_kalman_work`` disabled every
particle forms its own group; either way the sampled values and weights are
identical for the same random stream, only the evaluation counts differ.

Random use per step is fixed: one ``rng.random(n_particles)`` call for the
assignment draws, plus one ``rng.random()`` when resampling triggers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .association import (
    AssocHistorySummary,
    AssocPriorConfig,
    apply_deaths,
    assoc_prior,
    clutter_loglik,
)
from .gaussians import (
    LOG_2PI,
    GaussianMoments,
    KalmanCallCounter,
    SingularInnovationError,
    kf_update,
)
from .oumodel import (
    ModelParams,
    ObservationStats,
    ou_birth_density,
    ou_measurement,
    ou_predict_batch,
    ou_step_coeffs,
    ou_update_batch,
)

__all__ = [
    "Particle",
    "ParticleSet",
    "ImportanceTable",
    "FilterConfig",
    "DegenerateFilterError",
    "eval_importance",
    "rbmcda_step",
    "rbmcda_filter",
    "conditional_rbmcda",
    "resample",
    "assoc_loglik",
    "final_target_means",
    "chain_loglik",
]

CLUTTER = 0


class DegenerateFilterError(RuntimeError):
    """Every particle reached zero weight: the measurement is impossible
    under the model for all sampled histories."""


@dataclass(frozen=True)
class FilterConfig:
    """Knobs of one filter run.

    ess_threshold: resample when effective sample size < threshold * N.
    birth_block_diagonal: drop the home/position cross-covariance in the
        birth density.
    share_kalman_work: evaluate Kalman steps once per distinct history
        instead of once per particle.
    """

    assoc: AssocPriorConfig = field(default_factory=AssocPriorConfig)
    ess_threshold: float = 0.5
    birth_block_diagonal: bool = False
    share_kalman_work: bool = True


@dataclass(slots=True)
class Particle:
    """One sampled assignment history and the target moments it implies.

    assoc_history: assignment per processed measurement; 0 is clutter,
        labels are 1-based in order of first appearance, and the value
        n_seen + 1 opens a new target.
    targets: Gaussian moments per opened target (index = label - 1);
        entries for retired targets go stale and are never read again.
    cond_loglik: running log p(measurements so far | params, history).
    group: particles sharing a group id are bit-identical and may share
        Kalman evaluations.

    Internals (targets list, summary, history tuple) are shared between
    copies and must never be mutated in place.
    """

    assoc_history: tuple[int, ...]
    targets: list[GaussianMoments]
    summary: AssocHistorySummary
    log_weight: float
    cond_loglik: float = 0.0
    group: int = 0

    @property
    def n_seen(self) -> int:
        return self.summary.n_seen

    @property
    def n_alive(self) -> int:
        return self.summary.n_visible


@dataclass(slots=True)
class ImportanceTable:
    """Scored assignment candidates for one particle and one measurement.

    candidates holds assignment values (0 only when clutter is enabled,
    then visible labels ascending, then n_seen + 1 for a new target);
    moments holds the corresponding posterior moments, None for clutter.
    log_score is log prior + log likelihood, unnormalized.
    """

    candidates: np.ndarray
    log_prior: np.ndarray
    log_lik: np.ndarray
    log_score: np.ndarray
    moments: list[GaussianMoments | None]

    def normalized(self) -> np.ndarray:
        top = self.log_score.max()
        if top == -math.inf:
            raise DegenerateFilterError("all assignment candidates have zero mass")
        probs = np.exp(np.where(np.isneginf(self.log_score), -np.inf, self.log_score - top))
        return probs / probs.sum()


@dataclass
class ParticleSet:
    """Weighted particle population plus per-run accumulators."""

    particles: list[Particle]
    log_marginal_lik: float = 0.0
    counter: KalmanCallCounter = field(default_factory=KalmanCallCounter)
    time: float | None = None
    share_work: bool = True
    last_ess: float = math.nan
    last_resampled: bool = False

    @property
    def n_particles(self) -> int:
        return len(self.particles)

    def log_weights(self) -> np.ndarray:
        return np.array([p.log_weight for p in self.particles])

    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights())

    def ess(self) -> float:
        w = self.weights()
        return float(1.0 / (w**2).sum())


def _init_set(n_particles: int, total_obs: int, cfg: FilterConfig) -> ParticleSet:
    if n_particles < 1:
        raise ValueError("need at least one particle")
    log_uniform = -math.log(n_particles)
    particles = [
        Particle(
            assoc_history=(),
            targets=[],
            summary=AssocHistorySummary.empty(total_obs),
            log_weight=log_uniform,
            cond_loglik=0.0,
            group=0 if cfg.share_kalman_work else i,
        )
        for i in range(n_particles)
    ]
    return ParticleSet(particles, share_work=cfg.share_kalman_work)


def _obs_arrays(obs) -> tuple[np.ndarray, np.ndarray]:
    """Accept a Scenario-like object (times/ys attributes) or a pair."""
    if hasattr(obs, "times") and hasattr(obs, "ys"):
        return np.asarray(obs.times, dtype=float), np.asarray(obs.ys, dtype=float)
    times, ys = obs
    return np.asarray(times, dtype=float), np.asarray(ys, dtype=float)


def _clutter_ll(y: np.ndarray, acfg: AssocPriorConfig) -> float:
    if acfg.clutter_density is None and acfg.window is None:
        return -math.inf
    return clutter_loglik(y, acfg)


def _log_vec(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(values)


def _logsumexp(values: np.ndarray) -> float:
    top = values.max()
    if top == -math.inf:
        return -math.inf
    return float(top + np.log(np.exp(values - top).sum()))


def validate_history(history, total_obs: int) -> tuple[int, ...]:
    """Check length and canonical labeling; returns the history as a tuple."""
    history = tuple(int(c) for c in history)
    if len(history) != total_obs:
        raise ValueError(
            f"history length {len(history)} does not match {total_obs} observations"
        )
    top = 0
    for c in history:
        if c < 0 or c > top + 1:
            raise ValueError(f"history is not canonical at assignment {c}")
        top = max(top, c)
    return history


def eval_importance(
    particle: Particle,
    y: np.ndarray,
    theta: ModelParams,
    cfg: FilterConfig,
    stats: ObservationStats,
    counter: KalmanCallCounter | None = None,
) -> ImportanceTable:
    """Score every assignment candidate for one particle and one measurement.

    The particle's visible targets must already be predicted to the
    measurement time. Candidate updates run one Kalman update each; the
    clutter candidate (present only when clutter is enabled) uses the
    clutter density instead.
    """
    y = np.asarray(y, dtype=float)
    acfg = cfg.assoc
    H, R = ou_measurement(theta)
    prior = assoc_prior(particle.summary, acfg)
    n_seen = particle.summary.n_seen

    candidates: list[int] = []
    log_lik: list[float] = []
    moments: list[GaussianMoments | None] = []
    if acfg.clutter_prob > 0.0:
        candidates.append(CLUTTER)
        log_lik.append(_clutter_ll(y, acfg))
        moments.append(None)
    for j in np.flatnonzero(particle.summary.visible):
        updated, ll = kf_update(particle.targets[int(j)], y, H, R, counter)
        candidates.append(int(j) + 1)
        log_lik.append(ll)
        moments.append(updated)
    birth = ou_birth_density(theta, stats, cfg.birth_block_diagonal)
    updated, ll = kf_update(birth, y, H, R, counter)
    candidates.append(n_seen + 1)
    log_lik.append(ll)
    moments.append(updated)

    cand_arr = np.array(candidates, dtype=int)
    log_prior = _log_vec(prior[cand_arr])
    log_lik_arr = np.array(log_lik)
    return ImportanceTable(
        candidates=cand_arr,
        log_prior=log_prior,
        log_lik=log_lik_arr,
        log_score=log_prior + log_lik_arr,
        moments=moments,
    )


def rbmcda_step(
    pset: ParticleSet,
    y: np.ndarray,
    t: float,
    theta: ModelParams,
    cfg: FilterConfig,
    rng: np.random.Generator,
    stats: ObservationStats,
    clamp: int | None = None,
) -> ParticleSet:
    """Advance the filter by one measurement (in place; returns the set).

    Predicts all visible targets to time t, scores assignment candidates,
    draws one assignment per particle (particle 0 is forced to ``clamp``
    when given), updates weights and the marginal-likelihood estimate,
    applies the death rule, and resamples when the effective sample size
    falls below the configured fraction.
    """
    particles = pset.particles
    n_particles = len(particles)
    y = np.asarray(y, dtype=float)
    if pset.time is not None and t < pset.time:
        raise ValueError("observations must be processed in nondecreasing time order")
    dt = 0.0 if pset.time is None else t - pset.time
    coeffs = ou_step_coeffs(theta, dt)
    sigma_sq = theta.sigma**2
    birth = ou_birth_density(theta, stats, cfg.birth_block_diagonal)
    acfg = cfg.assoc
    clutter_on = acfg.clutter_prob > 0.0

    # Group particles sharing identical state (same history since the last
    # divergence); with sharing disabled group ids are unique by invariant.
    group_row = np.empty(n_particles, dtype=int)
    reps: list[Particle] = []
    row_of_group: dict[int, int] = {}
    for i, p in enumerate(particles):
        row = row_of_group.get(p.group)
        if row is None:
            row = len(reps)
            row_of_group[p.group] = row
            reps.append(p)
        group_row[i] = row
    n_groups = len(reps)

    # Batched prediction of every (group, visible target) pair; rows are
    # laid out group by group so each group owns a contiguous slice.
    visible_idx = [np.flatnonzero(rep.summary.visible) for rep in reps]
    row_start = np.zeros(n_groups + 1, dtype=int)
    for g in range(n_groups):
        row_start[g + 1] = row_start[g] + visible_idx[g].size
    n_rows = int(row_start[-1])
    pred_targets: list[list[GaussianMoments]] = [list(rep.targets) for rep in reps]

    # One batched update pass covers all predicted visible targets plus one
    # birth candidate per group (the trailing n_groups rows).
    all_means = np.empty((n_rows + n_groups, birth.mean.size))
    all_covs = np.empty((n_rows + n_groups,) + birth.cov.shape)
    if n_rows:
        r = 0
        for g, rep in enumerate(reps):
            for j in visible_idx[g]:
                all_means[r] = rep.targets[j].mean
                all_covs[r] = rep.targets[j].cov
                r += 1
        pmeans, pcovs = ou_predict_batch(
            all_means[:n_rows], all_covs[:n_rows], coeffs, pset.counter
        )
        all_means[:n_rows] = pmeans
        all_covs[:n_rows] = pcovs
        r = 0
        for g in range(n_groups):
            for j in visible_idx[g]:
                pred_targets[g][j] = GaussianMoments(pmeans[r], pcovs[r])
                r += 1
    all_means[n_rows:] = birth.mean
    all_covs[n_rows:] = birth.cov
    umeans, ucovs, ulogliks = ou_update_batch(
        all_means, all_covs, y, sigma_sq, pset.counter
    )

    clutter_value = _clutter_ll(y, acfg) if clutter_on else -math.inf

    # Candidate tables per group.
    group_cands: list[np.ndarray] = []
    group_scores: list[np.ndarray] = []
    group_logsum = np.empty(n_groups)
    group_lik: list[np.ndarray] = []
    lead = 1 if clutter_on else 0
    for g, rep in enumerate(reps):
        prior = assoc_prior(rep.summary, acfg)
        n_seen = rep.summary.n_seen
        n_vis = visible_idx[g].size
        cand_arr = np.empty(lead + n_vis + 1, dtype=int)
        lik = np.empty(cand_arr.size)
        if clutter_on:
            cand_arr[0] = CLUTTER
            lik[0] = clutter_value
        cand_arr[lead : lead + n_vis] = visible_idx[g] + 1
        lik[lead : lead + n_vis] = ulogliks[row_start[g] : row_start[g + 1]]
        cand_arr[-1] = n_seen + 1
        lik[-1] = ulogliks[n_rows + g]
        scores = _log_vec(prior[cand_arr]) + lik
        group_cands.append(cand_arr)
        group_scores.append(scores)
        group_lik.append(lik)
        group_logsum[g] = _logsumexp(scores)

    # Weight recursion and the per-step marginal-likelihood contribution.
    prev_logw = np.array([p.log_weight for p in particles])
    log_v = prev_logw + group_logsum[group_row]

    # Draw assignments: one uniform per particle, inverted through the
    # particle's group table.
    max_c = max(arr.size for arr in group_cands)
    cum = np.ones((n_groups, max_c))
    dead_group = np.zeros(n_groups, dtype=bool)
    for g, scores in enumerate(group_scores):
        top = scores.max()
        if top == -math.inf:
            dead_group[g] = True
            continue
        probs = np.exp(np.where(np.isneginf(scores), -np.inf, scores - top))
        probs /= probs.sum()
        cum[g, : scores.size] = np.cumsum(probs)
        cum[g, scores.size - 1 :] = 1.0
    draws = rng.random(n_particles)
    choice_idx = (cum[group_row] <= draws[:, None]).sum(axis=1)
    choice_idx[dead_group[group_row]] = 0

    clamp_special: tuple[GaussianMoments | None, float] | None = None
    if clamp is not None:
        g0 = group_row[0]
        cands0 = group_cands[g0]
        hits = np.flatnonzero(cands0 == clamp)
        if hits.size:
            choice_idx[0] = hits[0]
            if group_scores[g0][hits[0]] == -math.inf:
                log_v[0] = -math.inf
        else:
            # Clamped assignment outside the candidate set (e.g. a retired
            # target): keep the structure, zero the weight.
            log_v[0] = -math.inf
            if clamp == CLUTTER:
                clamp_special = (None, clutter_value)
            else:
                base = pred_targets[g0][clamp - 1]
                ums, ucs, ulls = ou_update_batch(
                    base.mean[None], base.cov[None], y, sigma_sq, pset.counter
                )
                clamp_special = (GaussianMoments(ums[0], ucs[0]), float(ulls[0]))

    step_loglik = _logsumexp(log_v)
    if step_loglik == -math.inf:
        raise DegenerateFilterError(
            "all particles reached zero weight while processing a measurement"
        )
    pset.log_marginal_lik += step_loglik
    new_logw = log_v - step_loglik

    # Install the chosen candidate per particle; construction is shared per
    # (group, choice) so identical successors stay identical objects.
    built: dict[tuple[int, int], tuple] = {}
    next_gid = 0
    new_particles: list[Particle] = []
    for i, p in enumerate(particles):
        g = group_row[i]
        if i == 0 and clamp is not None:
            c = int(clamp)
        else:
            c = int(group_cands[g][choice_idx[i]])
        key = (g, c)
        entry = built.get(key)
        if entry is None:
            if i == 0 and clamp_special is not None:
                chosen_moments, chosen_ll = clamp_special
            elif c == CLUTTER:
                chosen_moments = None
                chosen_ll = clutter_value
            else:
                pos = int(np.flatnonzero(group_cands[g] == c)[0])
                chosen_ll = float(group_lik[g][pos])
                if c == reps[g].summary.n_seen + 1:
                    chosen_moments = GaussianMoments(
                        umeans[n_rows + g], ucovs[n_rows + g]
                    )
                else:
                    r = int(
                        row_start[g]
                        + np.searchsorted(visible_idx[g], c - 1)
                    )
                    chosen_moments = GaussianMoments(umeans[r], ucovs[r])
            if c == CLUTTER:
                targets = pred_targets[g]
            elif c == reps[g].summary.n_seen + 1:
                targets = pred_targets[g] + [chosen_moments]
            else:
                targets = list(pred_targets[g])
                targets[c - 1] = chosen_moments
            summary = apply_deaths(reps[g].summary.advanced(c, t), t, acfg)
            history = reps[g].assoc_history + (c,)
            entry = (targets, summary, history, chosen_ll, next_gid)
            built[key] = entry
            next_gid += 1
        targets, summary, history, chosen_ll, gid = entry
        new_particles.append(
            Particle(
                assoc_history=history,
                targets=targets,
                summary=summary,
                log_weight=float(new_logw[i]),
                cond_loglik=p.cond_loglik + chosen_ll,
                group=gid if pset.share_work else i,
            )
        )

    pset.particles = new_particles
    pset.time = t

    w = np.exp(new_logw)
    pset.last_ess = float(1.0 / (w**2).sum())
    pset.last_resampled = pset.last_ess < cfg.ess_threshold * n_particles
    if pset.last_resampled:
        resample(pset, "keep_first" if clamp is not None else "unconditional", rng)
    return pset


def _systematic(weights: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    positions = (rng.random() + np.arange(size)) / size
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.minimum(
        np.searchsorted(cum, positions, side="right"), weights.size - 1
    )


def resample(
    pset: ParticleSet,
    mode: str = "unconditional",
    rng: np.random.Generator | None = None,
) -> ParticleSet:
    """Systematic resampling; weights reset to uniform.

    Mode "keep_first" pins particle 0 in place and fills the remaining
    slots systematically from the full weighted population.
    """
    if mode not in ("unconditional", "keep_first"):
        raise ValueError(f"unknown resampling mode {mode!r}")
    particles = pset.particles
    n = len(particles)
    w = pset.weights()
    w = w / w.sum()
    if mode == "keep_first":
        idx = np.empty(n, dtype=int)
        idx[0] = 0
        if n > 1:
            idx[1:] = _systematic(w, n - 1, rng)
    else:
        idx = _systematic(w, n, rng)
    log_uniform = -math.log(n)
    pset.particles = [
        Particle(
            assoc_history=particles[src].assoc_history,
            targets=particles[src].targets,
            summary=particles[src].summary,
            log_weight=log_uniform,
            cond_loglik=particles[src].cond_loglik,
            group=int(src) if pset.share_work else slot,
        )
        for slot, src in enumerate(idx)
    ]
    return pset


def rbmcda_filter(
    obs,
    theta: ModelParams,
    n_particles: int,
    cfg: FilterConfig | None = None,
    rng: np.random.Generator | None = None,
    stats: ObservationStats | None = None,
    counter: KalmanCallCounter | None = None,
) -> tuple[ParticleSet, float]:
    """Run the filter over a full measurement set.

    Returns the final particle set and the accumulated log marginal
    likelihood estimate. An external ``counter`` keeps a cumulative tally
    across repeated runs.
    """
    cfg = cfg if cfg is not None else FilterConfig()
    times, ys = _obs_arrays(obs)
    pset = _init_set(n_particles, times.size, cfg)
    if counter is not None:
        pset.counter = counter
    if times.size == 0:
        return pset, 0.0
    if stats is None:
        stats = ObservationStats.from_observations(ys)
    for t, y in zip(times, ys):
        rbmcda_step(pset, y, float(t), theta, cfg, rng, stats)
    return pset, pset.log_marginal_lik


def conditional_rbmcda(
    obs,
    theta: ModelParams,
    n_particles: int,
    clamped,
    cfg: FilterConfig | None = None,
    rng: np.random.Generator | None = None,
    stats: ObservationStats | None = None,
    counter: KalmanCallCounter | None = None,
) -> ParticleSet:
    """Filter run with particle 0's assignments fixed to ``clamped``.

    Particle 0's weight is still computed as if its assignments had been
    sampled, and resampling never moves or replaces it. Per-particle exact
    conditional log-likelihoods accumulate in ``cond_loglik``.
    """
    cfg = cfg if cfg is not None else FilterConfig()
    times, ys = _obs_arrays(obs)
    clamped = validate_history(clamped, times.size)
    pset = _init_set(n_particles, times.size, cfg)
    if counter is not None:
        pset.counter = counter
    if times.size == 0:
        return pset
    if stats is None:
        stats = ObservationStats.from_observations(ys)
    for k, (t, y) in enumerate(zip(times, ys)):
        rbmcda_step(pset, y, float(t), theta, cfg, rng, stats, clamp=clamped[k])
    return pset


def assoc_loglik(
    obs,
    theta: ModelParams,
    history,
    cfg: FilterConfig | None = None,
    stats: ObservationStats | None = None,
    counter: KalmanCallCounter | None = None,
) -> float:
    """Exact log p(measurements | params, assignment history).

    One Kalman pass: every visible target is predicted at each step and
    only the assigned one is updated (clutter steps add the clutter log
    density; a new-target step updates the birth density).
    """
    cfg = cfg if cfg is not None else FilterConfig()
    times, ys = _obs_arrays(obs)
    history = validate_history(history, times.size)
    if times.size == 0:
        return 0.0
    if stats is None:
        stats = ObservationStats.from_observations(ys)
    state = _HistoryWalk(theta, cfg, stats, counter)
    for t, y, c in zip(times, ys, history):
        state.step(float(t), y, int(c))
    return state.loglik


def final_target_means(
    obs,
    theta: ModelParams,
    history,
    cfg: FilterConfig | None = None,
    stats: ObservationStats | None = None,
    alive_only: bool = True,
    counter: KalmanCallCounter | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean positions of the targets of one assignment history at
    the final measurement time.

    Returns (labels, positions) where positions has one row per target.
    """
    cfg = cfg if cfg is not None else FilterConfig()
    times, ys = _obs_arrays(obs)
    history = validate_history(history, times.size)
    if stats is None:
        stats = ObservationStats.from_observations(ys)
    state = _HistoryWalk(theta, cfg, stats, counter)
    for t, y, c in zip(times, ys, history):
        state.step(float(t), y, int(c))
    labels = []
    positions = []
    for j, moments in enumerate(state.targets):
        if alive_only and not state.summary.visible[j]:
            continue
        labels.append(j + 1)
        positions.append(np.asarray(moments.mean)[2:4])
    if not positions:
        return np.zeros(0, dtype=int), np.zeros((0, 2))
    return np.array(labels, dtype=int), np.stack(positions)


class _HistoryWalk:
    """Single-history Kalman pass shared by the conditional-likelihood and
    final-state evaluations. Mirrors the filter's death bookkeeping."""

    def __init__(self, theta, cfg: FilterConfig, stats, counter):
        self.theta = theta
        self.cfg = cfg
        self.stats = stats
        self.counter = counter
        self.sigma_sq = theta.sigma**2
        self.targets: list[GaussianMoments] = []
        self.summary = AssocHistorySummary.empty(0)
        self.time: float | None = None
        self.loglik = 0.0

    def step(self, t: float, y: np.ndarray, c: int) -> None:
        dt = 0.0 if self.time is None else t - self.time
        if dt < 0.0:
            raise ValueError("observations must be in nondecreasing time order")
        coeffs = ou_step_coeffs(self.theta, dt)
        vis = np.flatnonzero(self.summary.visible)
        if vis.size:
            means = np.stack([self.targets[j].mean for j in vis])
            covs = np.stack([self.targets[j].cov for j in vis])
            pmeans, pcovs = ou_predict_batch(means, covs, coeffs, self.counter)
            for r, j in enumerate(vis):
                self.targets[j] = GaussianMoments(pmeans[r], pcovs[r])
        if c == CLUTTER:
            self.loglik += _clutter_ll(y, self.cfg.assoc)
        else:
            if c == self.summary.n_seen + 1:
                self.targets.append(
                    ou_birth_density(self.theta, self.stats, self.cfg.birth_block_diagonal)
                )
            base = self.targets[c - 1]
            umeans, ucovs, ulls = ou_update_batch(
                base.mean[None], base.cov[None], y, self.sigma_sq, self.counter
            )
            self.targets[c - 1] = GaussianMoments(umeans[0], ucovs[0])
            self.loglik += float(ulls[0])
        self.summary = apply_deaths(
            self.summary.advanced(c, t), t, self.cfg.assoc
        )
        self.time = t


def chain_loglik(
    times,
    ys,
    theta: ModelParams,
    stats: ObservationStats,
    block_diagonal: bool = False,
    counter: KalmanCallCounter | None = None,
) -> float:
    """Exact log-likelihood of a single target observed at the given times.

    The target is born at its first measurement and predicted directly
    across the gaps between its own measurements; by the exact
    discretization this equals stepping through every intermediate
    measurement time. This is the refresh move's inner loop, so the whole
    recursion runs on unrolled scalars; equivalence with the batched
    kernels is pinned by tests.
    """
    birth = ou_birth_density(theta, stats, block_diagonal)
    m0, m1, m2, m3 = (float(v) for v in birth.mean)
    bc = birth.cov
    p00, p01, p02, p03 = bc[0, 0], bc[0, 1], bc[0, 2], bc[0, 3]
    p11, p12, p13 = bc[1, 1], bc[1, 2], bc[1, 3]
    p22, p23, p33 = bc[2, 2], bc[2, 3], bc[3, 3]
    sigma_sq = theta.sigma**2
    lam = theta.lam
    stationary = theta.q / (2.0 * lam)
    log_2pi = LOG_2PI
    total = 0.0
    n_pred = 0
    prev_t: float | None = None
    ts = [float(t) for t in np.asarray(times, dtype=float)]
    points = np.asarray(ys, dtype=float)
    for i, t in enumerate(ts):
        if prev_t is not None:
            dt = t - prev_t
            decay = math.exp(-lam * dt)
            pull = -math.expm1(-lam * dt)
            step_var = stationary * -math.expm1(-2.0 * lam * dt)
            # home block constant; cross and position blocks contract
            q02 = pull * p00 + decay * p02
            q03 = pull * p01 + decay * p03
            q12 = pull * p01 + decay * p12
            q13 = pull * p11 + decay * p13
            q22 = pull * pull * p00 + 2.0 * pull * decay * p02 + decay * decay * p22 + step_var
            q23 = (
                pull * pull * p01
                + pull * decay * (p03 + p12)
                + decay * decay * p23
            )
            q33 = pull * pull * p11 + 2.0 * pull * decay * p13 + decay * decay * p33 + step_var
            m2 = pull * m0 + decay * m2
            m3 = pull * m1 + decay * m3
            p02, p03, p12, p13, p22, p23, p33 = q02, q03, q12, q13, q22, q23, q33
            n_pred += 1
        s00 = p22 + sigma_sq
        s11 = p33 + sigma_sq
        s01 = p23
        det = s00 * s11 - s01 * s01
        if det <= 0.0 or s00 <= 0.0:
            raise SingularInnovationError(
                "innovation covariance is numerically singular",
                np.array([[s00, s01], [s01, s11]]),
            )
        y0 = points[i, 0] - m2
        y1 = points[i, 1] - m3
        iv0 = (s11 * y0 - s01 * y1) / det
        iv1 = (s00 * y1 - s01 * y0) / det
        total += -(log_2pi + 0.5 * math.log(det) + 0.5 * (y0 * iv0 + y1 * iv1))
        # gain rows: K[j] = [PH[j,0], PH[j,1]] @ inv(S), PH columns = cov[:, 2:4]
        k00 = (p02 * s11 - p03 * s01) / det
        k01 = (p03 * s00 - p02 * s01) / det
        k10 = (p12 * s11 - p13 * s01) / det
        k11 = (p13 * s00 - p12 * s01) / det
        k20 = (p22 * s11 - p23 * s01) / det
        k21 = (p23 * s00 - p22 * s01) / det
        k30 = (p23 * s11 - p33 * s01) / det
        k31 = (p33 * s00 - p23 * s01) / det
        m0 += k00 * y0 + k01 * y1
        m1 += k10 * y0 + k11 * y1
        m2 += k20 * y0 + k21 * y1
        m3 += k30 * y0 + k31 * y1
        # P -= K (P H^T)^T, symmetrized by averaging the paired entries
        p00 -= k00 * p02 + k01 * p03
        p01 -= 0.5 * ((k00 * p12 + k01 * p13) + (k10 * p02 + k11 * p03))
        p11 -= k10 * p12 + k11 * p13
        new_p02 = p02 - 0.5 * ((k00 * p22 + k01 * p23) + (k20 * p02 + k21 * p03))
        new_p03 = p03 - 0.5 * ((k00 * p23 + k01 * p33) + (k30 * p02 + k31 * p03))
        new_p12 = p12 - 0.5 * ((k10 * p22 + k11 * p23) + (k20 * p12 + k21 * p13))
        new_p13 = p13 - 0.5 * ((k10 * p23 + k11 * p33) + (k30 * p12 + k31 * p13))
        new_p22 = p22 - (k20 * p22 + k21 * p23)
        new_p23 = p23 - 0.5 * ((k20 * p23 + k21 * p33) + (k30 * p22 + k31 * p23))
        new_p33 = p33 - (k30 * p23 + k31 * p33)
        p02, p03, p12, p13 = new_p02, new_p03, new_p12, new_p13
        p22, p23, p33 = new_p22, new_p23, new_p33
        prev_t = t
    if counter is not None:
        counter.predicts += n_pred
        counter.updates += len(ts)
    return total
