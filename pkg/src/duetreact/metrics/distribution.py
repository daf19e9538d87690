"""Gaussian fits, Frechet distance and diversity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def gaussian_stats(features) -> GaussianStats:
    """Sample mean and (n - 1)-normalized covariance of row vectors."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError(f"expected a non-empty (n, d) feature matrix, got {x.shape}")
    mu = x.mean(axis=0)
    if len(x) == 1:
        return GaussianStats(mu, np.zeros((x.shape[1], x.shape[1])))
    cov = np.cov(x, rowvar=False).reshape(x.shape[1], x.shape[1])
    return GaussianStats(mu, 0.5 * (cov + cov.T))


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def fid(a: GaussianStats, b: GaussianStats) -> float:
    """|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)).

    The trace of the product root is taken as the trace of
    (S_a^(1/2) S_b S_a^(1/2))^(1/2), which has the same eigenvalues and
    stays symmetric; negative eigenvalues from round-off are clipped.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    root_a = _psd_sqrt(a.cov)
    inner = root_a @ b.cov @ root_a
    w = np.linalg.eigvalsh(0.5 * (inner + inner.T))
    covmean = np.sum(np.sqrt(np.clip(w, 0.0, None)))
    value = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * covmean)
    return max(value, 0.0)


def fid_from_features(fa, fb) -> float:
    return fid(gaussian_stats(fa), gaussian_stats(fb))


def diversity(features) -> float:
    """Mean Euclidean distance over all unordered pairs."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or len(x) < 2:
        raise ValueError("diversity needs at least two feature vectors")
    return _kernels.mean_pairwise_distance(x)
