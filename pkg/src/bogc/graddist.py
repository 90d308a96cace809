"""Gaussian approximations of gradient distributions.

Gradients are functions of the random last-layer weights. Their first two
moments are estimated by Monte Carlo over posterior draws, and the fused
gradient distribution is the arithmetic mean of the per-modality ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateCovariance, DimensionMismatch, InvalidParameter, NotPositiveDefinite
from .numerics import (
    JITTER_MAX,
    JITTER_START,
    cholesky_batch,
    inverse_diagonal_from_factor,
    sample_gaussian,
    symmetrize,
)
from .posterior import GaussianPosterior

DEFAULT_MC_SAMPLES = 64


@dataclass
class GradDist:
    """Gaussian gradient model: mean, (jittered) covariance, diagonal of its inverse."""

    mean: np.ndarray
    cov: np.ndarray
    precision_diag: np.ndarray
    n_samples: int
    jitter: float = 0.0

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]


# Same fields and invariants; kept as a distinct name for readability at call sites.
FusionGradDist = GradDist


def moments_from_samples(
    grads: np.ndarray,
    jitter: float = JITTER_START,
    max_jitter: float = JITTER_MAX,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Moment-match gradient draws of shape (..., n, K).

    Returns ``(mean, cov, precision_diag, jitter_used)`` where ``cov`` is the
    plug-in estimate ``E[g g^T] - mu mu^T`` plus the jitter needed to make it
    positive definite.
    """
    grads = np.asarray(grads, dtype=float)
    n, K = grads.shape[-2:]
    if n < 2:
        raise InvalidParameter("need at least two Monte-Carlo samples")
    mu = grads.mean(axis=-2)
    second = (np.swapaxes(grads, -1, -2) @ grads) / n
    cov = symmetrize(second - mu[..., :, None] * mu[..., None, :])
    try:
        L, used = cholesky_batch(cov, jitter, max_jitter)
    except NotPositiveDefinite as exc:
        raise DegenerateCovariance(str(exc)) from exc
    cov = cov + used[..., None, None] * np.eye(K)
    return mu, cov, inverse_diagonal_from_factor(L), used


def mc_moments(
    posterior: GaussianPosterior,
    grad_fn: Callable[[np.ndarray], np.ndarray],
    n: int = DEFAULT_MC_SAMPLES,
    rng=None,
    jitter: float = JITTER_START,
) -> GradDist:
    """Estimate the distribution of ``grad_fn(Theta)`` for ``Theta ~ posterior``.

    ``grad_fn`` is called once with an ``(n, K_theta)`` array of draws and must
    return the ``(n, K)`` gradients.
    """
    if n < 2:
        raise InvalidParameter("need at least two Monte-Carlo samples")
    thetas = sample_gaussian(posterior.mean, posterior.chol_factor, rng, size=n)
    grads = np.asarray(grad_fn(thetas), dtype=float)
    if grads.ndim != 2 or grads.shape[0] != n:
        raise DimensionMismatch(f"grad_fn returned shape {grads.shape}, expected ({n}, K)")
    mu, cov, lam, used = moments_from_samples(grads, jitter)
    return GradDist(mu, cov, lam, n, float(used))


def fusion_dist(modality_dists: Sequence[GradDist]) -> FusionGradDist:
    """Distribution of the modality-averaged gradient: mean of means, mean of covariances."""
    if not modality_dists:
        raise DimensionMismatch("need at least one modality distribution")
    K = modality_dists[0].dim
    if any(d.dim != K or d.cov.shape != (K, K) for d in modality_dists):
        raise DimensionMismatch("modality distributions differ in dimension")
    if len(modality_dists) == 1:
        d = modality_dists[0]
        return FusionGradDist(d.mean.copy(), d.cov.copy(), d.precision_diag.copy(),
                              d.n_samples, d.jitter)
    M = len(modality_dists)
    mu = sum(d.mean for d in modality_dists) / M
    cov = symmetrize(sum(d.cov for d in modality_dists) / M)
    lam = precision_diagonal_of(cov)
    return FusionGradDist(mu, cov, lam, min(d.n_samples for d in modality_dists), 0.0)


def precision_diagonal_of(cov: np.ndarray) -> np.ndarray:
    """Diagonal of ``cov^{-1}`` (not the reciprocal of ``diag(cov)``); batched."""
    L, _ = cholesky_batch(np.asarray(cov, dtype=float), jitter=0.0)
    return inverse_diagonal_from_factor(L)


def precision_diagonal(dist: GradDist) -> np.ndarray:
    return precision_diagonal_of(dist.cov)
