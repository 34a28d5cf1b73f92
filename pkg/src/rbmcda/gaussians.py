"""Linear-Gaussian inference primitives.

Kalman prediction and measurement updates with explicit innovation
log-likelihoods, a shared Gaussian log-density kernel, and a call counter
that meters the cost of every algorithm built on top. All likelihood
arithmetic is carried out in log space, and covariance results are
re-symmetrized after each operation so long filtering chains keep positive
semidefiniteness to within floating-point noise.

Batched variants (``kf_predict_batch`` / ``kf_update_batch``) evaluate a
stack of Gaussians against shared system matrices; each row of a batch
counts as one evaluation and produces bit-identical results to the scalar
functions applied row by row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

__all__ = [
    "GaussianMoments",
    "KalmanCallCounter",
    "SingularCovarianceError",
    "SingularInnovationError",
    "kf_predict",
    "kf_update",
    "kf_predict_batch",
    "kf_update_batch",
    "gaussian_logpdf",
]

LOG_2PI = float(np.log(2.0 * np.pi))


class SingularCovarianceError(ValueError):
    """A covariance matrix required to be positive definite is not."""

    def __init__(self, message: str, cov: np.ndarray | None = None):
        super().__init__(message)
        self.cov = cov


class SingularInnovationError(SingularCovarianceError):
    """The innovation covariance of a Kalman update has no Cholesky factor."""

    @property
    def innovation_cov(self) -> np.ndarray | None:
        return self.cov


def symmetrize(mat: np.ndarray) -> np.ndarray:
    """Average a (stack of) square matrices with their transposes."""
    return 0.5 * (mat + np.swapaxes(mat, -1, -2))


@dataclass(slots=True)
class GaussianMoments:
    """Mean vector and covariance matrix of one Gaussian state distribution.

    Instances are treated as immutable once constructed; operations return
    new objects, which lets particles share moment objects freely.
    """

    mean: np.ndarray
    cov: np.ndarray

    def validate(self, tol: float = 1e-9) -> "GaussianMoments":
        """Check shapes, symmetry and positive semidefiniteness.

        Symmetry is judged relative to the largest-magnitude entry;
        eigenvalues may be negative only within ``tol`` of zero.
        """
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"inconsistent moment shapes: mean {mean.shape}, cov {cov.shape}"
            )
        if cov.size:
            scale = float(np.abs(cov).max())
            if scale > 0.0 and float(np.abs(cov - cov.T).max()) > tol * scale:
                raise ValueError("covariance is not symmetric within tolerance")
            smallest = float(np.linalg.eigvalsh(cov).min())
            if smallest < -tol * max(scale, 1.0):
                raise ValueError(f"covariance has negative eigenvalue {smallest:g}")
        return self

    @property
    def dim(self) -> int:
        return int(np.asarray(self.mean).size)


@dataclass(slots=True)
class KalmanCallCounter:
    """Running tally of Kalman evaluations, the cost unit of every run.

    Each predicted target and each candidate update counts as one
    evaluation regardless of whether it was executed scalar or batched.
    Counts only grow; per-worker counters are combined with :meth:`merge`.
    """

    predicts: int = 0
    updates: int = 0

    @property
    def total(self) -> int:
        return self.predicts + self.updates

    def merge(self, other: "KalmanCallCounter") -> "KalmanCallCounter":
        self.predicts += other.predicts
        self.updates += other.updates
        return self

    def snapshot(self) -> tuple[int, int]:
        return (self.predicts, self.updates)


def kf_predict(
    state: GaussianMoments,
    A: np.ndarray,
    Q: np.ndarray,
    counter: KalmanCallCounter | None = None,
) -> GaussianMoments:
    """Propagate Gaussian moments through linear dynamics with noise Q.

    Returns new moments (A m, A P A^T + Q), covariance re-symmetrized.
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    m = np.asarray(state.mean, dtype=float)
    P = np.asarray(state.cov, dtype=float)
    n = m.size
    if A.shape != (n, n) or Q.shape != (n, n) or P.shape != (n, n):
        raise ValueError(
            f"dimension mismatch: state {n}, A {A.shape}, Q {Q.shape}, P {P.shape}"
        )
    mean = A @ m
    cov = symmetrize(A @ P @ A.T + Q)
    if counter is not None:
        counter.predicts += 1
    return GaussianMoments(mean, cov)


def kf_update(
    prior: GaussianMoments,
    y: np.ndarray,
    H: np.ndarray,
    R: np.ndarray,
    counter: KalmanCallCounter | None = None,
) -> tuple[GaussianMoments, float]:
    """Condition Gaussian moments on one linear-Gaussian measurement.

    Returns the posterior moments together with the log innovation
    likelihood log N(y; H m, H P H^T + R).

    Raises:
        SingularInnovationError: the innovation covariance is numerically
            singular (Cholesky factorization failed); the offending matrix
            is attached to the exception.
    """
    y = np.asarray(y, dtype=float)
    H = np.asarray(H, dtype=float)
    R = np.asarray(R, dtype=float)
    m = np.asarray(prior.mean, dtype=float)
    P = np.asarray(prior.cov, dtype=float)
    n = m.size
    k = y.size
    if H.shape != (k, n) or R.shape != (k, k):
        raise ValueError(
            f"dimension mismatch: state {n}, y {k}, H {H.shape}, R {R.shape}"
        )
    innovation = y - H @ m
    S = symmetrize(H @ P @ H.T + R)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovationError(
            "innovation covariance is numerically singular", S
        ) from exc
    whitened = np.linalg.solve(L, innovation)
    loglik = float(
        -0.5 * (k * LOG_2PI + whitened @ whitened) - np.log(np.diag(L)).sum()
    )
    gain = cho_solve((L, True), H @ P).T
    mean = m + gain @ innovation
    cov = symmetrize(P - gain @ S @ gain.T)
    if counter is not None:
        counter.updates += 1
    return GaussianMoments(mean, cov), loglik


def kf_predict_batch(
    means: np.ndarray,
    covs: np.ndarray,
    A: np.ndarray,
    Q: np.ndarray,
    counter: KalmanCallCounter | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Predict a stack of Gaussians through shared dynamics (A, Q).

    ``means`` has shape (n, d) and ``covs`` (n, d, d); counts one predict
    per row.
    """
    means = np.asarray(means, dtype=float)
    covs = np.asarray(covs, dtype=float)
    out_means = means @ A.T
    out_covs = symmetrize(np.einsum("ij,njk,lk->nil", A, covs, A) + Q)
    if counter is not None:
        counter.predicts += means.shape[0]
    return out_means, out_covs


def kf_update_batch(
    means: np.ndarray,
    covs: np.ndarray,
    y: np.ndarray,
    H: np.ndarray,
    R: np.ndarray,
    counter: KalmanCallCounter | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Update a stack of Gaussians against one measurement with shared (H, R).

    Returns (posterior means, posterior covariances, log innovation
    likelihoods); counts one update per row.
    """
    means = np.asarray(means, dtype=float)
    covs = np.asarray(covs, dtype=float)
    y = np.asarray(y, dtype=float)
    n = means.shape[0]
    k = y.size
    if n == 0:
        d = means.shape[1] if means.ndim == 2 else 0
        return means.copy(), covs.copy(), np.empty(0)
    innovations = y - means @ H.T                                # (n, k)
    PHt = np.einsum("nij,kj->nik", covs, H)                      # (n, d, k)
    S = symmetrize(np.einsum("ki,nij->nkj", H, PHt) + R)         # (n, k, k)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        for row in range(n):
            try:
                np.linalg.cholesky(S[row])
            except np.linalg.LinAlgError as exc:
                raise SingularInnovationError(
                    "innovation covariance is numerically singular", S[row]
                ) from exc
        raise
    whitened = np.linalg.solve(L, innovations[:, :, None])[:, :, 0]
    logdets = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
    logliks = -0.5 * (k * LOG_2PI + (whitened**2).sum(axis=1) + logdets)
    gains = np.swapaxes(np.linalg.solve(S, np.swapaxes(PHt, 1, 2)), 1, 2)
    out_means = means + np.einsum("nij,nj->ni", gains, innovations)
    out_covs = symmetrize(covs - np.einsum("nij,njk,nlk->nil", gains, S, gains))
    if counter is not None:
        counter.updates += n
    return out_means, out_covs, logliks


def gaussian_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """Log density of a multivariate Gaussian at x.

    Raises:
        SingularCovarianceError: cov is not positive definite.
    """
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    d = x.size
    if mean.size != d or cov.shape != (d, d):
        raise ValueError(
            f"dimension mismatch: x {d}, mean {mean.size}, cov {cov.shape}"
        )
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(
            "covariance is not positive definite", cov
        ) from exc
    whitened = np.linalg.solve(L, x - mean)
    return float(-0.5 * (d * LOG_2PI + whitened @ whitened) - np.log(np.diag(L)).sum())
