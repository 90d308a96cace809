"""Closed-form references shared by unit and acceptance tests."""

import numpy as np

from bogc.posterior import GaussianPosterior


def linear_gaussian_case(seed: int, K_theta=5, K=4):
    gen = np.random.default_rng(seed)
    A = gen.standard_normal((K, K_theta))
    b = gen.standard_normal(K)
    m = gen.standard_normal(K_theta)
    R = gen.standard_normal((K_theta, K_theta))
    S = R @ R.T / K_theta + 0.5 * np.eye(K_theta)
    post = GaussianPosterior.from_covariance(m, S)
    return post, (lambda th: th @ A.T + b), A @ m + b, A @ S @ A.T


def gaussian_kl(mu0, S0, mu1, S1) -> float:
    """KL(N(mu0, S0) || N(mu1, S1))."""
    k = len(mu0)
    S1inv = np.linalg.inv(S1)
    d = mu1 - mu0
    _, ld0 = np.linalg.slogdet(S0)
    _, ld1 = np.linalg.slogdet(S1)
    return 0.5 * (np.trace(S1inv @ S0) + d @ S1inv @ d - k + ld1 - ld0)
