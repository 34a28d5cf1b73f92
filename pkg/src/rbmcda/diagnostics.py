"""Posterior summaries and convergence metrics for tracker output.

Includes the weighted posterior over the number of targets, the Kolmogorov
distance between integer distributions, the optimal-subpattern-assignment
(OSPA) distance between point sets, the split-chain potential scale
reduction factor, effective sample size, and convergence-versus-cost
curves.

The potential scale reduction factor follows the split-chain recipe: each
chain is halved, W is the mean within-chain variance, B/n the variance of
the split-chain means, and the statistic is
sqrt(((n - 1)/n * W + B/n) / W).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .filter import FilterConfig, final_target_means
from .oumodel import ModelParams, ObservationStats
from .pmcmc import Trace

__all__ = [
    "WeightedIntDist",
    "num_targets_dist",
    "pooled_num_targets_dist",
    "kolmogorov",
    "ospa",
    "psrf",
    "ess",
    "convergence_curve",
    "mean_ospa_over_trace",
]


@dataclass(frozen=True)
class WeightedIntDist:
    """Probability distribution over integers with explicit weights."""

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=int)
        probs = np.asarray(self.probs, dtype=float)
        if support.size != probs.size:
            raise ValueError("support and probs must have equal lengths")
        if support.size == 0:
            raise ValueError("distribution must have nonempty support")
        if np.any(np.diff(support) <= 0):
            raise ValueError("support must be strictly increasing")
        if probs.min() < 0.0 or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to one")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_samples(cls, values, weights=None) -> "WeightedIntDist":
        values = np.asarray(values, dtype=int)
        if weights is None:
            weights = np.ones(values.size)
        weights = np.asarray(weights, dtype=float)
        support, inverse = np.unique(values, return_inverse=True)
        probs = np.bincount(inverse, weights=weights, minlength=support.size)
        return cls(support, probs / probs.sum())

    def prob_of(self, value: int) -> float:
        hit = np.flatnonzero(self.support == value)
        return float(self.probs[hit[0]]) if hit.size else 0.0


def num_targets_dist(
    trace: Trace,
    alive_only: bool = True,
    start: int = 0,
    stop: int | None = None,
    use_occupancy: bool = True,
) -> WeightedIntDist:
    """Posterior over the number of targets from one chain segment.

    Gibbs traces weight each retained history equally. Marginal-MH traces
    weight every particle of every proposed population by occupancy times
    its final particle weight; ``use_occupancy=False`` falls back to the
    per-iteration retained draws.
    """
    stop = trace.thetas.shape[0] if stop is None else stop
    if (
        trace.algorithm == "pmmh"
        and use_occupancy
        and trace.particle_weights is not None
    ):
        counts = (
            trace.particle_counts_alive if alive_only else trace.particle_counts_seen
        )
        weights = trace.occupancy[start:stop, None] * trace.particle_weights[start:stop]
        return WeightedIntDist.from_samples(
            counts[start:stop].ravel(), weights.ravel()
        )
    counts = trace.n_alive if alive_only else trace.n_seen
    return WeightedIntDist.from_samples(counts[start:stop])


def pooled_num_targets_dist(
    traces, alive_only: bool = True, discard_frac: float = 0.5, **kwargs
) -> WeightedIntDist:
    """Pool per-chain target-count posteriors, discarding initial warmup."""
    values = []
    weights = []
    for trace in traces:
        n = trace.thetas.shape[0]
        dist = num_targets_dist(
            trace, alive_only=alive_only, start=int(n * discard_frac), **kwargs
        )
        values.append(dist.support)
        weights.append(dist.probs)
    values = np.concatenate(values)
    weights = np.concatenate(weights)
    return WeightedIntDist.from_samples(values, weights)


def kolmogorov(d1: WeightedIntDist, d2: WeightedIntDist) -> float:
    """Supremum distance between the cumulative distributions."""
    support = np.union1d(d1.support, d2.support)
    cdf1 = np.cumsum(_aligned(d1, support))
    cdf2 = np.cumsum(_aligned(d2, support))
    return float(np.abs(cdf1 - cdf2).max())


def _aligned(dist: WeightedIntDist, support: np.ndarray) -> np.ndarray:
    out = np.zeros(support.size)
    idx = np.searchsorted(support, dist.support)
    out[idx] = dist.probs
    return out


def ospa(X, Y, cutoff: float = 10.0, order: float = 1.0) -> float:
    """Optimal-subpattern-assignment distance between two point sets.

    Localization errors are capped at ``cutoff``; unmatched points (the
    cardinality difference) each cost the full cutoff. The assignment is
    solved exactly. Both sets empty gives 0; exactly one empty gives the
    cutoff.
    """
    if cutoff <= 0.0:
        raise ValueError(f"cutoff must be positive, got {cutoff}")
    if order < 1.0:
        raise ValueError(f"order must be >= 1, got {order}")
    X = np.asarray(X, dtype=float).reshape(-1, 2) if np.size(X) else np.zeros((0, 2))
    Y = np.asarray(Y, dtype=float).reshape(-1, 2) if np.size(Y) else np.zeros((0, 2))
    n_x, n_y = X.shape[0], Y.shape[0]
    if n_x == 0 and n_y == 0:
        return 0.0
    if n_x == 0 or n_y == 0:
        return float(cutoff)
    dists = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2)
    costs = np.minimum(dists, cutoff) ** order
    rows, cols = linear_sum_assignment(costs)
    matched = costs[rows, cols].sum()
    n = max(n_x, n_y)
    total = matched + (n - min(n_x, n_y)) * cutoff**order
    return float((total / n) ** (1.0 / order))


def psrf(chains, split: bool = True) -> np.ndarray | float:
    """Split-chain potential scale reduction factor.

    ``chains`` is a sequence of equal-length per-chain arrays, each of
    shape (n,) or (n, d). Returns a scalar for scalar chains, else one
    value per parameter. All-constant chains give 1.0 when their means
    agree and +inf otherwise.
    """
    arrays = [np.asarray(c, dtype=float) for c in chains]
    if len(arrays) < 2:
        raise ValueError("need at least two chains")
    scalar = arrays[0].ndim == 1
    arrays = [a[:, None] if a.ndim == 1 else a for a in arrays]
    length = arrays[0].shape[0]
    if any(a.shape != arrays[0].shape for a in arrays):
        raise ValueError("chains must have identical shapes")
    if length < 4:
        raise ValueError("chains must have length >= 4")
    if split:
        half = length // 2
        arrays = [part for a in arrays for part in (a[:half], a[half : 2 * half])]
    stacked = np.stack(arrays)                     # (m, n, d)
    n = stacked.shape[1]
    within = stacked.var(axis=1, ddof=1).mean(axis=0)
    means = stacked.mean(axis=1)
    between_over_n = means.var(axis=0, ddof=1)
    var_plus = (n - 1) / n * within + between_over_n
    out = np.empty(within.size)
    for j in range(within.size):
        if within[j] > 0.0:
            out[j] = math.sqrt(var_plus[j] / within[j])
        else:
            out[j] = 1.0 if between_over_n[j] == 0.0 else math.inf
    return float(out[0]) if scalar else out


def ess(weights) -> float:
    """Effective sample size of a normalized weight vector: 1 / sum w^2."""
    weights = np.asarray(weights, dtype=float)
    return float(1.0 / (weights**2).sum())


def convergence_curve(
    traces,
    reference: WeightedIntDist,
    cut_points,
    alive_only: bool = True,
) -> list[tuple[int, float]]:
    """Distance to a reference distribution as a function of spent cost.

    At each cut the chains are truncated to that many iterations, the
    first half of each is discarded as warmup, the remainders pooled, and
    the Kolmogorov distance to the reference recorded against the total
    Kalman evaluations spent. Cuts beyond the chain length are clipped
    with a warning; empty cuts count as distance 1 at cost 0.
    """
    length = min(trace.thetas.shape[0] for trace in traces)
    points = []
    for cut in cut_points:
        cut = int(cut)
        if cut > length:
            warnings.warn(
                f"cut {cut} beyond chain length {length}; clipping", stacklevel=2
            )
            cut = length
        if cut <= 1:
            points.append((0, 1.0))
            continue
        values = []
        for trace in traces:
            counts = trace.n_alive if alive_only else trace.n_seen
            values.append(counts[cut // 2 : cut])
        pooled = WeightedIntDist.from_samples(np.concatenate(values))
        calls = int(sum(trace.kalman_calls[cut - 1] for trace in traces))
        points.append((calls, kolmogorov(pooled, reference)))
    return points


def mean_ospa_over_trace(
    trace: Trace,
    obs,
    truth_points,
    cfg: FilterConfig | None = None,
    cutoff: float = 10.0,
    order: float = 1.0,
    start: int = 0,
    stop: int | None = None,
    stride: int = 1,
    stats: ObservationStats | None = None,
) -> float:
    """Weighted mean OSPA between per-sample posterior target locations and
    a ground-truth point set.

    For every ``stride``-th retained sample the Kalman pass is replayed
    under that sample's parameters and history to get the posterior mean
    locations of the targets at the final measurement time.
    """
    cfg = cfg if cfg is not None else FilterConfig()
    stop = trace.thetas.shape[0] if stop is None else stop
    total = 0.0
    weight = 0.0
    for i in range(start, stop, stride):
        theta = ModelParams.from_vector(trace.thetas[i])
        _, points = final_target_means(
            obs, theta, trace.histories[i], cfg, stats=stats
        )
        w = float(trace.occupancy[i]) if trace.algorithm == "pmmh" else 1.0
        if w == 0.0:
            continue
        total += w * ospa(points, truth_points, cutoff, order)
        weight += w
    if weight == 0.0:
        raise ValueError("no samples selected for the OSPA average")
    return total / weight
