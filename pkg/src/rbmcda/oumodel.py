"""Mean-reverting target motion model and its measurement model.

Each target carries a four-dimensional state [home_x, home_y, pos_x, pos_y]:
a fixed home location and the actual position, which reverts toward home at
rate ``lam`` while diffusing with intensity ``q``. The transition over an
arbitrary nonnegative time step is available in closed form, so irregular
observation spacing introduces no discretization error. Measurements are the
position coordinates plus isotropic Gaussian noise with standard deviation
``sigma``.

New targets are born at the moment of their first measurement. Their birth
density takes the empirical mean and covariance of all observations for the
home coordinates and places the position at home plus stationary
excursion noise, giving a joint Gaussian over the full state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gaussians import LOG_2PI, GaussianMoments, SingularInnovationError

__all__ = [
    "ModelParams",
    "ObservationStats",
    "PARAM_NAMES",
    "ou_discretize",
    "ou_measurement",
    "ou_birth_density",
    "ou_step_coeffs",
    "ou_predict_batch",
    "ou_update_batch",
    "steady_state_var",
]

# Sampling parameterization: the MCMC moves in (sqrt_q, lam, sigma) space.
PARAM_NAMES = ("sqrt_q", "lam", "sigma")

STATE_DIM = 4
OBS_DIM = 2


@dataclass(frozen=True, slots=True)
class ModelParams:
    """Static model parameters: diffusion intensity q, reversion rate lam,
    measurement noise standard deviation sigma. All strictly positive."""

    q: float
    lam: float
    sigma: float

    def __post_init__(self):
        if not (self.q > 0.0 and self.lam > 0.0 and self.sigma > 0.0):
            raise ValueError(
                f"model parameters must be strictly positive, got "
                f"q={self.q}, lam={self.lam}, sigma={self.sigma}"
            )

    @classmethod
    def from_vector(cls, vec) -> "ModelParams":
        """Build from the sampling parameterization (sqrt_q, lam, sigma)."""
        sqrt_q, lam, sigma = (float(v) for v in vec)
        if sqrt_q <= 0.0:
            raise ValueError(f"sqrt_q must be strictly positive, got {sqrt_q}")
        return cls(q=sqrt_q * sqrt_q, lam=lam, sigma=sigma)

    def to_vector(self) -> np.ndarray:
        return np.array([math.sqrt(self.q), self.lam, self.sigma])


@dataclass(frozen=True)
class ObservationStats:
    """Sample mean and unbiased sample covariance of a set of measurements."""

    mean: np.ndarray
    cov: np.ndarray
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("observation statistics need at least two points")

    @classmethod
    def from_observations(cls, ys) -> "ObservationStats":
        ys = np.asarray(ys, dtype=float)
        if ys.ndim != 2 or ys.shape[0] < 2:
            raise ValueError("need a (n >= 2, obs_dim) array of observations")
        cov = np.atleast_2d(np.cov(ys, rowvar=False, ddof=1))
        return cls(mean=ys.mean(axis=0), cov=cov, count=ys.shape[0])


def steady_state_var(params: ModelParams) -> float:
    """Stationary per-coordinate variance q / (2 lam) of the position
    excursion around home."""
    return params.q / (2.0 * params.lam)


def ou_step_coeffs(params: ModelParams, dt: float) -> tuple[float, float, float]:
    """Scalar coefficients of the exact transition over dt: position decay
    toward home, the complementary pull, and the per-coordinate step
    variance."""
    if dt < 0.0:
        raise ValueError(f"time step must be nonnegative, got {dt}")
    decay = math.exp(-params.lam * dt)
    pull = -math.expm1(-params.lam * dt)          # 1 - decay, accurate near 0
    step_var = steady_state_var(params) * -math.expm1(-2.0 * params.lam * dt)
    return decay, pull, step_var


def ou_discretize(params: ModelParams, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact transition matrix and process noise covariance over a step dt.

    Home coordinates are constant; each position coordinate contracts
    toward home by exp(-lam dt) and picks up variance
    q/(2 lam) (1 - exp(-2 lam dt)).
    """
    decay, pull, step_var = ou_step_coeffs(params, dt)
    A = np.eye(STATE_DIM)
    A[2, 2] = A[3, 3] = decay
    A[2, 0] = A[3, 1] = pull
    Q = np.diag([0.0, 0.0, step_var, step_var])
    return A, Q


def ou_measurement(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Measurement matrix selecting the position block, and noise covariance
    sigma^2 I."""
    H = np.zeros((OBS_DIM, STATE_DIM))
    H[0, 2] = H[1, 3] = 1.0
    R = params.sigma**2 * np.eye(OBS_DIM)
    return H, R


def ou_predict_batch(
    means: np.ndarray,
    covs: np.ndarray,
    coeffs: tuple[float, float, float],
    counter=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact prediction of a stack of target states, exploiting the block
    structure of the transition (home constant, position contracting).

    Equivalent to the generic Kalman prediction with the matrices from
    :func:`ou_discretize`, but elementwise, so each row's result is
    independent of what else shares the batch. Counts one predict per row.
    """
    decay, pull, step_var = coeffs
    n = means.shape[0]
    out_means = np.empty_like(means)
    out_means[:, :2] = means[:, :2]
    out_means[:, 2:] = pull * means[:, :2] + decay * means[:, 2:]
    home = covs[:, :2, :2]
    cross = covs[:, :2, 2:]
    cross_t = covs[:, 2:, :2]
    pos = covs[:, 2:, 2:]
    out_covs = np.empty_like(covs)
    out_covs[:, :2, :2] = home
    top_right = pull * home + decay * cross
    bottom_left = pull * home + decay * cross_t
    out_covs[:, :2, 2:] = 0.5 * (top_right + np.swapaxes(bottom_left, 1, 2))
    out_covs[:, 2:, :2] = np.swapaxes(out_covs[:, :2, 2:], 1, 2)
    pos_new = (
        pull * pull * home
        + pull * decay * (cross + cross_t)
        + decay * decay * pos
    )
    pos_new = 0.5 * (pos_new + np.swapaxes(pos_new, 1, 2))
    pos_new[:, 0, 0] += step_var
    pos_new[:, 1, 1] += step_var
    out_covs[:, 2:, 2:] = pos_new
    if counter is not None:
        counter.predicts += n
    return out_means, out_covs


def ou_update_batch(
    means: np.ndarray,
    covs: np.ndarray,
    y: np.ndarray,
    sigma_sq: float,
    counter=None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Measurement update of a stack of target states against one position
    measurement with isotropic noise variance sigma_sq.

    Closed-form 2x2 innovation algebra; equivalent to the generic update
    with the matrices from :func:`ou_measurement`, elementwise per row.
    Counts one update per row.
    """
    n = means.shape[0]
    if n == 0:
        return means.copy(), covs.copy(), np.empty(0)
    s00 = covs[:, 2, 2] + sigma_sq
    s11 = covs[:, 3, 3] + sigma_sq
    s01 = 0.5 * (covs[:, 2, 3] + covs[:, 3, 2])
    det = s00 * s11 - s01 * s01
    bad = np.flatnonzero((det <= 0.0) | (s00 <= 0.0))
    if bad.size:
        row = int(bad[0])
        raise SingularInnovationError(
            "innovation covariance is numerically singular",
            np.array([[s00[row], s01[row]], [s01[row], s11[row]]]),
        )
    v0 = y[0] - means[:, 2]
    v1 = y[1] - means[:, 3]
    iv0 = (s11 * v0 - s01 * v1) / det
    iv1 = (s00 * v1 - s01 * v0) / det
    logliks = -(LOG_2PI + 0.5 * np.log(det) + 0.5 * (v0 * iv0 + v1 * iv1))
    ph = 0.5 * (covs[:, :, 2:] + np.swapaxes(covs[:, 2:, :], 1, 2))
    gain0 = (ph[:, :, 0] * s11[:, None] - ph[:, :, 1] * s01[:, None]) / det[:, None]
    gain1 = (ph[:, :, 1] * s00[:, None] - ph[:, :, 0] * s01[:, None]) / det[:, None]
    out_means = means + gain0 * v0[:, None] + gain1 * v1[:, None]
    # K S K^T = (P H^T S^-1) (H P) = K (P H^T)^T
    shrink = gain0[:, :, None] * ph[:, None, :, 0] + gain1[:, :, None] * ph[:, None, :, 1]
    out_covs = covs - 0.5 * (shrink + np.swapaxes(shrink, 1, 2))
    if counter is not None:
        counter.updates += n
    return out_means, out_covs, logliks


def ou_birth_density(
    params: ModelParams,
    stats: ObservationStats,
    block_diagonal: bool = False,
) -> GaussianMoments:
    """Gaussian state density for a target at its first measurement.

    Home ~ N(obs mean, obs cov); position = home + stationary excursion,
    so the joint covariance carries the observation covariance as the
    cross-block. ``block_diagonal`` drops that cross-covariance, treating
    home and position blocks as independent.
    """
    ybar = np.asarray(stats.mean, dtype=float)
    sigma_hat = np.asarray(stats.cov, dtype=float)
    excursion = steady_state_var(params) * np.eye(OBS_DIM)
    mean = np.concatenate([ybar, ybar])
    cov = np.zeros((STATE_DIM, STATE_DIM))
    cov[:2, :2] = sigma_hat
    cov[2:, 2:] = sigma_hat + excursion
    if not block_diagonal:
        cov[:2, 2:] = sigma_hat
        cov[2:, :2] = sigma_hat
    return GaussianMoments(mean, cov)
