"""Priors over measurement-to-origin assignment decisions.

Every incoming measurement is explained in exactly one of three ways: as
clutter, as a re-observation of a previously opened target, or as the first
observation of a new target. The probability of opening a new target comes
from marginalizing a latent total target count drawn uniformly from
{1, ..., support}, with each assignment drawn i.i.d. uniformly over that
count; conditioning on the canonical assignment prefix observed so far and
asking for the chance that the next draw is a previously unseen target gives
the closed-form weight computed by :func:`new_target_prob`. All currently
visible targets share the remaining non-clutter mass equally.

A deterministic timeout retires targets: once a target has gone unobserved
for strictly longer than the configured threshold it is marked invisible and
never revived.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

__all__ = [
    "AssocPriorConfig",
    "AssocHistorySummary",
    "assoc_prior",
    "clutter_loglik",
    "apply_deaths",
    "new_target_prob",
    "history_log_prior",
    "history_summary",
    "PriorWalker",
]

NEW_TARGET_RULES = ("latent_count", "fixed")


@dataclass(frozen=True)
class AssocPriorConfig:
    """Configuration of the assignment prior, clutter model and death rule.

    clutter_prob: prior probability that a measurement is clutter, in [0, 1).
    clutter_density: constant clutter density; None selects a uniform
        density over ``window``.
    window: axis-aligned rectangle (x_min, x_max, y_min, y_max) for the
        uniform clutter density.
    death_threshold: a visible target unobserved for strictly longer than
        this is retired; None disables the rule.
    new_target_rule: "latent_count" for the marginalized uniform-count
        prior, "fixed" for a constant new-target probability (testing aid).
    fixed_new_prob: the constant used by the "fixed" rule.
    latent_count_max: overrides the latent-count support; None uses the
        total number of measurements in the dataset.
    """

    clutter_prob: float = 0.0
    clutter_density: float | None = None
    window: tuple[float, float, float, float] | None = None
    death_threshold: float | None = None
    new_target_rule: str = "latent_count"
    fixed_new_prob: float = 0.5
    latent_count_max: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.clutter_prob < 1.0:
            raise ValueError(f"clutter_prob must be in [0, 1), got {self.clutter_prob}")
        if self.new_target_rule not in NEW_TARGET_RULES:
            raise ValueError(f"unknown new_target_rule {self.new_target_rule!r}")
        if not 0.0 <= self.fixed_new_prob <= 1.0:
            raise ValueError("fixed_new_prob must be in [0, 1]")
        if self.clutter_density is not None and self.clutter_density < 0.0:
            raise ValueError("clutter_density must be nonnegative")
        if self.death_threshold is not None and self.death_threshold <= 0.0:
            raise ValueError("death_threshold must be positive")
        if self.window is not None:
            x0, x1, y0, y1 = self.window
            if not (x1 > x0 and y1 > y0):
                raise ValueError(f"window must be nonempty, got {self.window}")
        if self.clutter_prob > 0.0 and self.clutter_density is None and self.window is None:
            raise ValueError("uniform clutter requires a window")


@dataclass(frozen=True)
class AssocHistorySummary:
    """What the assignment prior needs to know about a particle's history.

    k: 1-based index of the measurement about to be processed.
    total_obs: total number of measurements in the dataset.
    visible: per-target aliveness indicators, one per target opened so far
        (target labels are 1-based; entry j-1 belongs to target j).
    last_seen: per-target time of the most recent associated measurement.

    Instances are immutable; updates return new summaries so particles can
    share them safely.
    """

    k: int = 1
    total_obs: int = 0
    visible: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    last_seen: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def empty(cls, total_obs: int) -> "AssocHistorySummary":
        return cls(k=1, total_obs=total_obs)

    @property
    def n_seen(self) -> int:
        return self.visible.size

    @property
    def n_visible(self) -> int:
        return int(self.visible.sum())

    def advanced(self, c: int, t: float) -> "AssocHistorySummary":
        """Summary after measurement k got assignment c at time t."""
        n = self.n_seen
        if c < 0 or c > n + 1:
            raise ValueError(f"assignment {c} invalid with {n} targets seen")
        if c == 0:
            return replace(self, k=self.k + 1)
        if c == n + 1:
            visible = np.append(self.visible, True)
            last_seen = np.append(self.last_seen, t)
        else:
            # Re-association refreshes last_seen; a retired target stays
            # retired even if a clamped history insists on it.
            visible = self.visible
            last_seen = self.last_seen.copy()
            last_seen[c - 1] = t
        return AssocHistorySummary(self.k + 1, self.total_obs, visible, last_seen)

    def validate(self) -> "AssocHistorySummary":
        if self.n_seen > self.k - 1:
            raise ValueError("more targets seen than measurements processed")
        if self.last_seen.size != self.n_seen:
            raise ValueError("last_seen and visible lengths differ")
        return self


@lru_cache(maxsize=None)
def new_target_prob(k: int, n_seen: int, support: int) -> float:
    """Probability that measurement k opens a new target, given that n_seen
    distinct targets appeared among the first k-1 assignments.

    Marginalizes a latent total count N uniform on {1, ..., support}: a
    canonical prefix with n_seen distinct targets has likelihood
    N! / (N - n_seen)! / N^(k-1) (1 when n_seen is 0), and the next draw
    is unseen with probability (N - n_seen) / N.
    """
    if support < 1:
        raise ValueError(f"latent-count support must be >= 1, got {support}")
    if n_seen == 0:
        return 1.0
    counts = np.arange(n_seen, support + 1, dtype=float)
    if counts.size == 0:
        return 0.0
    log_lik = (
        gammaln(counts + 1.0)
        - gammaln(counts - n_seen + 1.0)
        - (k - 1) * np.log(counts)
    )
    lik = np.exp(log_lik - log_lik.max())
    return float((lik * (counts - n_seen) / counts).sum() / lik.sum())


def assoc_prior(summary: AssocHistorySummary, cfg: AssocPriorConfig) -> np.ndarray:
    """Prior over assignments of the next measurement.

    Returns a vector of length n_seen + 2 indexed by assignment value:
    entry 0 is clutter, entries 1..n_seen the existing targets (zero when
    invisible), entry n_seen + 1 a new target. Entries sum to one.
    """
    n = summary.n_seen
    probs = np.zeros(n + 2)
    clutter = cfg.clutter_prob
    probs[0] = clutter
    n_visible = summary.n_visible
    if n == 0 or n_visible == 0:
        probs[n + 1] = 1.0 - clutter
        return probs
    if cfg.new_target_rule == "fixed":
        birth = cfg.fixed_new_prob
    else:
        support = cfg.latent_count_max or summary.total_obs
        birth = new_target_prob(summary.k, n, support)
    probs[n + 1] = (1.0 - clutter) * birth
    probs[1 : n + 1][summary.visible] = (1.0 - clutter) * (1.0 - birth) / n_visible
    return probs


def clutter_loglik(y: np.ndarray, cfg: AssocPriorConfig) -> float:
    """Log density of the clutter model at y.

    Constant-density mode returns log(density) everywhere; uniform mode
    returns -log(window area) inside the window and -inf outside.
    """
    if cfg.clutter_density is not None:
        return math.log(cfg.clutter_density) if cfg.clutter_density > 0.0 else -math.inf
    if cfg.window is None:
        raise ValueError("uniform clutter density requires a window")
    x0, x1, y0, y1 = cfg.window
    if x0 <= y[0] <= x1 and y0 <= y[1] <= y1:
        return -math.log((x1 - x0) * (y1 - y0))
    return -math.inf


def apply_deaths(
    summary: AssocHistorySummary, now: float, cfg: AssocPriorConfig
) -> AssocHistorySummary:
    """Retire every visible target unobserved for strictly longer than the
    death threshold. No-op when the rule is disabled; never revives."""
    if cfg.death_threshold is None or summary.n_seen == 0:
        return summary
    expired = summary.visible & (now - summary.last_seen > cfg.death_threshold)
    if not expired.any():
        return summary
    return replace(summary, visible=summary.visible & ~expired)


def history_summary(
    times: np.ndarray, history, total_obs: int, cfg: AssocPriorConfig
) -> AssocHistorySummary:
    """Summary state after processing a full assignment history, including
    the death bookkeeping."""
    summary = AssocHistorySummary.empty(total_obs)
    for t, c in zip(times, history):
        summary = apply_deaths(summary.advanced(int(c), t), t, cfg)
    return summary


class PriorWalker:
    """Incremental evaluator of the sequential assignment prior.

    Carries the same state as AssocHistorySummary plus the accumulated log
    probability, with in-place arrays so long walks stay cheap, and it can
    be copied mid-walk so alternative suffixes share a common prefix. The
    per-step probabilities agree with :func:`assoc_prior` entry by entry.
    """

    __slots__ = ("cfg", "total_obs", "k", "n_seen", "visible", "last_seen", "logp")

    def __init__(self, total_obs: int, cfg: AssocPriorConfig):
        self.cfg = cfg
        self.total_obs = total_obs
        self.k = 1
        self.n_seen = 0
        self.visible = np.zeros(max(total_obs, 1), dtype=bool)
        self.last_seen = np.zeros(max(total_obs, 1))
        self.logp = 0.0

    def copy(self) -> "PriorWalker":
        out = PriorWalker.__new__(PriorWalker)
        out.cfg = self.cfg
        out.total_obs = self.total_obs
        out.k = self.k
        out.n_seen = self.n_seen
        out.visible = self.visible.copy()
        out.last_seen = self.last_seen.copy()
        out.logp = self.logp
        return out

    def step_prob(self, c: int) -> float:
        """Prior probability of assignment c for the measurement about to
        be processed; agrees with assoc_prior entry by entry."""
        cfg = self.cfg
        n = self.n_seen
        if c < 0 or c > n + 1:
            raise ValueError(f"history is not canonical at assignment {c}")
        clutter = cfg.clutter_prob
        if c == 0:
            return clutter
        n_visible = int(self.visible[:n].sum())
        if n == 0 or n_visible == 0:
            return 1.0 - clutter if c == n + 1 else 0.0
        if cfg.new_target_rule == "fixed":
            birth = cfg.fixed_new_prob
        else:
            support = cfg.latent_count_max or self.total_obs
            birth = new_target_prob(self.k, n, support)
        if c == n + 1:
            return (1.0 - clutter) * birth
        if not self.visible[c - 1]:
            return 0.0
        return (1.0 - clutter) * (1.0 - birth) / n_visible

    def step(self, t: float, c: int) -> float:
        """Process one assignment: accumulate its log prior probability,
        update the bookkeeping, run the death sweep. Returns the step's
        log probability."""
        p = self.step_prob(c)
        logp = math.log(p) if p > 0.0 else -math.inf
        self.logp += logp
        n = self.n_seen
        if c == n + 1:
            if n == self.visible.size:
                self.visible = np.append(self.visible, False)
                self.last_seen = np.append(self.last_seen, 0.0)
            self.visible[n] = True
            self.last_seen[n] = t
            self.n_seen = n + 1
        elif c > 0:
            self.last_seen[c - 1] = t
        threshold = self.cfg.death_threshold
        if threshold is not None and self.n_seen:
            alive = self.visible[: self.n_seen]
            alive &= ~(t - self.last_seen[: self.n_seen] > threshold)
        self.k += 1
        return logp


def history_log_prior(
    times: np.ndarray, history, total_obs: int, cfg: AssocPriorConfig
) -> float:
    """Joint log prior probability of a full canonical assignment history.

    Walks the sequential prior with the same death bookkeeping the filter
    uses; returns -inf if any step has zero prior mass (e.g. an assignment
    to a retired target).
    """
    walker = PriorWalker(total_obs, cfg)
    for t, c in zip(times, history):
        walker.step(float(t), int(c))
        if walker.logp == -math.inf:
            return -math.inf
    return walker.logp
