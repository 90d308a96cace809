"""Laplace posterior over each encoder's last layer.

The curvature is the generalized Gauss-Newton matrix of the modality's
unimodal head, plus an isotropic Gaussian prior precision. The general
constructor applies the Newton correction ``-H^{-1} q`` to the mean; the
training loop centres it at the current weights unless asked otherwise (see
:func:`modality_posterior`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidParameter, InvalidProbability
from .model import CLASSIFICATION, Batch, ToyMultiModalNet, forward, output_residual, softmax
from .numerics import MAX_DIM, cholesky, invert_spd, symmetrize


@dataclass(frozen=True)
class PriorSpec:
    prior_variance: float = 1.0

    def __post_init__(self):
        if not self.prior_variance > 0:
            raise InvalidParameter("prior_variance must be positive")

    @property
    def precision(self) -> float:
        return 1.0 / self.prior_variance


@dataclass
class GaussianPosterior:
    mean: np.ndarray
    covariance: np.ndarray
    chol_factor: np.ndarray

    @classmethod
    def from_covariance(cls, mean, covariance) -> "GaussianPosterior":
        covariance = symmetrize(np.asarray(covariance, dtype=float))
        return cls(np.asarray(mean, dtype=float), covariance, cholesky(covariance))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def to_json(self) -> dict:
        k = self.dim
        return {
            "dim": k,
            "mean": [float(v) for v in self.mean],
            # row-major
            "covariance": [float(v) for v in self.covariance.reshape(-1)],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GaussianPosterior":
        k = int(obj["dim"])
        cov = np.asarray(obj["covariance"], dtype=float).reshape(k, k)
        return cls.from_covariance(obj["mean"], cov)

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def nll_output_hessian(probs: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    """Hessian of softmax cross-entropy w.r.t. the logits: ``diag(p) - p p^T``."""
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1:
        raise DimensionMismatch("probs must be a vector")
    if np.any(p < -atol) or abs(p.sum() - 1.0) > atol:
        raise InvalidProbability(f"not a probability vector: {p}")
    return np.diag(p) - np.outer(p, p)


def _output_hessians(logits: np.ndarray, mode: str) -> np.ndarray:
    T, C = logits.shape
    if mode == CLASSIFICATION:
        p = softmax(logits)
        return np.einsum("tc,cd->tcd", p, np.eye(C)) - p[:, :, None] * p[:, None, :]
    # ||y - f||^2 has Hessian 2I in f.
    return np.broadcast_to(2.0 * np.eye(C), (T, C, C))


def ggn_matrix(net: ToyMultiModalNet, batch: Batch, modality_index: int,
               prior: PriorSpec = PriorSpec()) -> np.ndarray:
    """``sum_j J_j^T B_j J_j + prior_precision * I`` over the batch.

    The unimodal logits are linear in Theta, with Jacobian ``W kron psi^T``,
    so each term is ``(W^T B_j W) kron (psi_j psi_j^T)``.
    """
    K = net.theta_dim
    if K > MAX_DIM:
        raise DimensionMismatch(f"theta dimension {K} exceeds cap {MAX_DIM}")
    fwd = forward(net, batch)
    i = modality_index
    W = net.params[f"head{i}.w"]
    B = _output_hessians(fwd.uni_logits[i], net.mode)
    A = np.einsum("cf,tcd,dg->tfg", W, B, W)  # (T, F, F)
    psi = fwd.psi[i]
    F, H = net.feature_dim, net.hidden_dim
    G = np.einsum("tfg,th,tk->fhgk", A, psi, psi).reshape(K, K)
    G = symmetrize(G)
    G[np.diag_indices(K)] += prior.precision
    return G


def neg_log_joint_gradient(net: ToyMultiModalNet, batch: Batch, modality_index: int,
                           prior: PriorSpec = PriorSpec()) -> np.ndarray:
    """``q = -grad log p(D, Theta)``: summed unimodal NLL gradient plus prior term."""
    fwd = forward(net, batch)
    i = modality_index
    resid = output_residual(fwd.uni_logits[i], batch.labels, net.mode)
    dfeat = resid @ net.params[f"head{i}.w"]
    g = (dfeat.T @ fwd.psi[i]).reshape(-1)
    return g + prior.precision * net.theta(i)


def laplace_posterior(theta_hat: np.ndarray, ggn: np.ndarray, q: np.ndarray) -> GaussianPosterior:
    theta_hat = np.asarray(theta_hat, dtype=float)
    q = np.asarray(q, dtype=float)
    if ggn.shape != (theta_hat.shape[0], theta_hat.shape[0]) or q.shape != theta_hat.shape:
        raise DimensionMismatch("theta_hat, ggn and q disagree in dimension")
    cov = invert_spd(ggn)
    return GaussianPosterior.from_covariance(theta_hat - cov @ q, cov)


def modality_posterior(net: ToyMultiModalNet, batch: Batch, modality_index: int,
                       prior: PriorSpec = PriorSpec(), shift: bool = True) -> GaussianPosterior:
    """Laplace posterior of ``Theta_i`` on ``batch``.

    ``shift=False`` drops the first-order term, centring the Gaussian at the
    current weights. With the term kept and ``q`` containing the prior
    gradient, the expected unimodal gradient under the posterior is biased
    towards ``-mean / prior_variance``.
    """
    ggn = ggn_matrix(net, batch, modality_index, prior)
    theta = net.theta(modality_index)
    if shift:
        q = neg_log_joint_gradient(net, batch, modality_index, prior)
    else:
        q = np.zeros_like(theta)
    return laplace_posterior(theta, ggn, q)
