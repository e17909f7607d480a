"""Distribution-comparison metrics for desk-scale acceptance runs.

Moment errors against the analytic mixture moments, the two-sample energy
distance, and a Gaussian-fit KL.  Energy distance uses the empirical-
measure (V-statistic) form: it is nonnegative, symmetric, and exactly zero
iff the two sample sets coincide as multisets.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from scipy.spatial.distance import cdist

from .errors import NumericalError
from .gmm import GmmSpec

_BLOCK = 2048


@dataclass
class SampleQualityReport:
    """Moment and distance diagnostics for one sample set vs. a target."""

    mean_error_l2: float
    cov_frobenius_error: float
    n: int
    energy_distance: float | None = None
    gaussian_kl: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _as_samples(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("samples must be a (n, D) array")
    # canonical row order: summations become exactly permutation-invariant
    return x[np.lexsort(x.T[::-1])]


def moment_report(samples, target: GmmSpec) -> SampleQualityReport:
    """Empirical mean/covariance vs. the analytic mixture moments."""
    x = _as_samples(samples)
    if x.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    if x.shape[1] != target.dim:
        raise ValueError(
            f"dimension mismatch: samples D={x.shape[1]}, target D={target.dim}"
        )
    mean_err = float(np.linalg.norm(x.mean(axis=0) - target.mean()))
    emp_cov = np.cov(x, rowvar=False, ddof=1).reshape(target.dim, target.dim)
    ref_cov = target.cov()
    cov_err = float(np.linalg.norm(emp_cov - ref_cov)
                    / np.linalg.norm(ref_cov))
    return SampleQualityReport(mean_error_l2=mean_err,
                               cov_frobenius_error=cov_err,
                               n=x.shape[0])


def _pairwise_distance_sum(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of all pairwise Euclidean distances, accumulated in a fixed
    block order so the result is independent of threading."""
    total = 0.0
    for i in range(0, a.shape[0], _BLOCK):
        block = a[i:i + _BLOCK]
        for j in range(0, b.shape[0], _BLOCK):
            total += float(cdist(block, b[j:j + _BLOCK]).sum())
    return total


def energy_distance(a, b) -> float:
    """Two-sample energy distance 2 E||A-B|| - E||A-A'|| - E||B-B'||.

    Expectations are over the empirical measures, so identical multisets
    give exactly zero and the result is always nonnegative.
    """
    a, b = _as_samples(a), _as_samples(b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("both sample sets must be nonempty")
    if a.shape[1] != b.shape[1]:
        raise ValueError("dimension mismatch between sample sets")
    n, m = a.shape[0], b.shape[0]
    cross = _pairwise_distance_sum(a, b) / (n * m)
    within_a = _pairwise_distance_sum(a, a) / (n * n)
    within_b = _pairwise_distance_sum(b, b) / (m * m)
    return max(2.0 * cross - within_a - within_b, 0.0)


def gaussian_kl_fit(samples, target_mean, target_cov) -> float:
    """Fit a Gaussian to the samples and return KL(fitted || target).

    The target covariance must be positive definite and the fit needs
    n > D samples; a singular fitted covariance raises NumericalError.
    """
    x = _as_samples(samples)
    n, d = x.shape
    target_mean = np.atleast_1d(np.asarray(target_mean, dtype=float))
    target_cov = np.asarray(target_cov, dtype=float)
    if target_cov.ndim == 0:
        target_cov = target_cov[None, None]
    if n <= d:
        raise ValueError("need more samples than dimensions to fit")
    sign_t, logdet_t = np.linalg.slogdet(target_cov)
    if sign_t <= 0:
        raise ValueError("target covariance must be positive definite")

    fit_mean = x.mean(axis=0)
    fit_cov = np.cov(x, rowvar=False, ddof=1).reshape(d, d)
    sign_f, logdet_f = np.linalg.slogdet(fit_cov)
    if sign_f <= 0:
        raise NumericalError("fitted covariance is singular")

    target_inv = np.linalg.inv(target_cov)
    diff = fit_mean - target_mean
    kl = 0.5 * (np.trace(target_inv @ fit_cov) + diff @ target_inv @ diff
                - d + logdet_t - logdet_f)
    return max(float(kl), 0.0)
