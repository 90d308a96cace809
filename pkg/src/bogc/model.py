"""Toy multi-modal network with hand-written gradients.

Each modality ``i`` owns a two-layer encoder

    psi_i  = tanh(W1_i x_i + b1_i)          hidden activation
    zeta_i = Theta_i psi_i + b2_i           modality feature (Theta_i = enc{i}.w2)

followed by a unimodal head ``W_i zeta_i + c_i``. The fusion head reads the
concatenation of all features. ``Theta_i`` (weights only, no bias) is the
parameter block that the posterior machinery treats as random; it is flattened
row-major into a vector of length ``K = feature_dim * hidden_dim``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, InvalidParameter

CLASSIFICATION = "classification"
REGRESSION = "regression"


@dataclass
class Batch:
    inputs: list[np.ndarray]
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = [np.asarray(x, dtype=float) for x in self.inputs]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1 or self.labels.size < 1:
            raise DimensionMismatch("labels must be a non-empty 1-D array")
        for x in self.inputs:
            if x.ndim != 2 or x.shape[0] != self.labels.shape[0]:
                raise DimensionMismatch(
                    f"modality input shape {x.shape} does not match batch size {self.size}"
                )

    @property
    def size(self) -> int:
        return int(self.labels.shape[0])

    def take(self, idx) -> "Batch":
        return Batch([x[idx] for x in self.inputs], self.labels[idx])


@dataclass
class ToyMultiModalNet:
    input_dims: tuple[int, ...]
    hidden_dim: int
    feature_dim: int
    num_classes: int
    mode: str = CLASSIFICATION
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, input_dims, hidden_dim=16, feature_dim=4, num_classes=4,
             rng=None, mode=CLASSIFICATION, scale=1.0) -> "ToyMultiModalNet":
        """Glorot-style random initialization (``scale=0`` gives an all-zero net)."""
        if mode not in (CLASSIFICATION, REGRESSION):
            raise InvalidParameter(f"unknown mode {mode!r}")
        gen = rng.generator if hasattr(rng, "generator") else (rng or np.random.default_rng(0))
        net = cls(tuple(int(d) for d in input_dims), hidden_dim, feature_dim, num_classes, mode)

        def dense(n_out, n_in):
            bound = scale * np.sqrt(6.0 / (n_in + n_out))
            return gen.uniform(-bound, bound, size=(n_out, n_in))

        M = len(net.input_dims)
        for i, d in enumerate(net.input_dims):
            net.params[f"enc{i}.w1"] = dense(hidden_dim, d)
            net.params[f"enc{i}.b1"] = np.zeros(hidden_dim)
            net.params[f"enc{i}.w2"] = dense(feature_dim, hidden_dim)
            net.params[f"enc{i}.b2"] = np.zeros(feature_dim)
            net.params[f"head{i}.w"] = dense(num_classes, feature_dim)
            net.params[f"head{i}.b"] = np.zeros(num_classes)
        net.params["fusion.w"] = dense(num_classes, M * feature_dim)
        net.params["fusion.b"] = np.zeros(num_classes)
        return net

    @property
    def num_modalities(self) -> int:
        return len(self.input_dims)

    @property
    def theta_dim(self) -> int:
        return self.feature_dim * self.hidden_dim

    def theta(self, i: int) -> np.ndarray:
        """Flattened last encoder layer of modality ``i``."""
        return self.params[f"enc{i}.w2"].reshape(-1).copy()

    def set_theta(self, i: int, vec: np.ndarray) -> None:
        self.params[f"enc{i}.w2"] = np.asarray(vec, dtype=float).reshape(
            self.feature_dim, self.hidden_dim
        ).copy()

    def copy(self) -> "ToyMultiModalNet":
        return ToyMultiModalNet(
            self.input_dims, self.hidden_dim, self.feature_dim, self.num_classes,
            self.mode, {k: v.copy() for k, v in self.params.items()},
        )

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params.values())


class Forward(NamedTuple):
    uni_logits: list[np.ndarray]
    fusion_logits: np.ndarray
    psi: list[np.ndarray]
    features: list[np.ndarray]


class Losses(NamedTuple):
    fusion: float
    uni: list[float]
    total: float


@dataclass
class GradReport:
    """Gradients of one batch, kept separate per source.

    ``uni[i]`` is d L_uni^i / d Theta_i and ``fusion[i]`` is d L_fusion / d
    Theta_i, both flattened. ``params`` holds d L_total / d p for every
    parameter array of the net.
    """

    uni: list[np.ndarray]
    fusion: list[np.ndarray]
    losses: Losses
    params: dict[str, np.ndarray]


def forward(net: ToyMultiModalNet, batch: Batch) -> Forward:
    if len(batch.inputs) != net.num_modalities:
        raise DimensionMismatch(
            f"batch has {len(batch.inputs)} modalities, net expects {net.num_modalities}"
        )
    p = net.params
    psi, feats, logits = [], [], []
    for i, x in enumerate(batch.inputs):
        if x.shape[1] != net.input_dims[i]:
            raise DimensionMismatch(
                f"modality {i}: input dim {x.shape[1]} != {net.input_dims[i]}"
            )
        h = np.tanh(x @ p[f"enc{i}.w1"].T + p[f"enc{i}.b1"])
        z = h @ p[f"enc{i}.w2"].T + p[f"enc{i}.b2"]
        psi.append(h)
        feats.append(z)
        logits.append(z @ p[f"head{i}.w"].T + p[f"head{i}.b"])
    fused = np.concatenate(feats, axis=1) @ p["fusion.w"].T + p["fusion.b"]
    return Forward(logits, fused, psi, feats)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    return np.eye(num_classes)[labels]


def per_sample_loss(logits: np.ndarray, labels: np.ndarray, mode: str) -> np.ndarray:
    if mode == CLASSIFICATION:
        z = logits - np.max(logits, axis=-1, keepdims=True)
        logz = np.log(np.sum(np.exp(z), axis=-1))
        return logz - np.take_along_axis(z, labels[:, None], axis=-1)[:, 0]
    target = one_hot(labels, logits.shape[-1])
    return np.sum((target - logits) ** 2, axis=-1)


def output_residual(logits: np.ndarray, labels: np.ndarray, mode: str) -> np.ndarray:
    """Per-sample derivative of the per-sample loss with respect to the logits."""
    target = one_hot(labels, logits.shape[-1])
    if mode == CLASSIFICATION:
        return softmax(logits) - target
    return 2.0 * (logits - target)


def compute_losses(net: ToyMultiModalNet, batch: Batch, phi: float = 1.0,
                   fwd: Forward | None = None) -> Losses:
    if phi < 0:
        raise InvalidParameter("phi must be non-negative")
    fwd = fwd or forward(net, batch)
    lf = float(np.mean(per_sample_loss(fwd.fusion_logits, batch.labels, net.mode)))
    lu = [float(np.mean(per_sample_loss(z, batch.labels, net.mode))) for z in fwd.uni_logits]
    return Losses(lf, lu, lf + phi * sum(lu))


def total_loss(net: ToyMultiModalNet, batch: Batch, phi: float = 1.0) -> float:
    """``L_fusion + phi * sum_i L_uni^i`` with batch-mean losses."""
    return compute_losses(net, batch, phi).total


def backward(net: ToyMultiModalNet, batch: Batch, phi: float = 1.0) -> GradReport:
    fwd = forward(net, batch)
    losses = compute_losses(net, batch, phi, fwd)
    p = net.params
    T, F, M = batch.size, net.feature_dim, net.num_modalities
    grads: dict[str, np.ndarray] = {}

    dz_f = output_residual(fwd.fusion_logits, batch.labels, net.mode) / T
    concat = np.concatenate(fwd.features, axis=1)
    grads["fusion.w"] = dz_f.T @ concat
    grads["fusion.b"] = dz_f.sum(axis=0)
    dfeat_f = dz_f @ p["fusion.w"]

    uni, fus = [], []
    for i in range(M):
        x, h, z = batch.inputs[i], fwd.psi[i], fwd.features[i]
        dz_u = output_residual(fwd.uni_logits[i], batch.labels, net.mode) / T
        grads[f"head{i}.w"] = phi * (dz_u.T @ z)
        grads[f"head{i}.b"] = phi * dz_u.sum(axis=0)
        dfeat_u = dz_u @ p[f"head{i}.w"]
        dfeat_fi = dfeat_f[:, i * F:(i + 1) * F]
        g_uni = dfeat_u.T @ h
        g_fus = dfeat_fi.T @ h
        uni.append(g_uni.reshape(-1))
        fus.append(g_fus.reshape(-1))

        dfeat = dfeat_fi + phi * dfeat_u
        grads[f"enc{i}.w2"] = g_fus + phi * g_uni
        grads[f"enc{i}.b2"] = dfeat.sum(axis=0)
        da = (dfeat @ p[f"enc{i}.w2"]) * (1.0 - h * h)
        grads[f"enc{i}.w1"] = da.T @ x
        grads[f"enc{i}.b1"] = da.sum(axis=0)
    return GradReport(uni, fus, losses, grads)


def theta_sample_gradients(net: ToyMultiModalNet, i: int, psi: np.ndarray,
                           labels: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """Per-sample unimodal-loss gradients at sampled values of ``Theta_i``.

    ``psi`` is (T, H) and ``thetas`` is (T, n, K): ``n`` parameter draws for
    each batch item. Returns (T, n, K) gradients of the per-item loss (not
    divided by the batch size). Works for both output modes.
    """
    T, n, K = thetas.shape
    F, H = net.feature_dim, net.hidden_dim
    if K != F * H or psi.shape != (T, H):
        raise DimensionMismatch("theta samples or activations have the wrong shape")
    W = net.params[f"head{i}.w"]
    th = thetas.reshape(T, n, F, H)
    feat = np.einsum("tnfh,th->tnf", th, psi) + net.params[f"enc{i}.b2"]
    logits = feat @ W.T + net.params[f"head{i}.b"]
    target = one_hot(labels, net.num_classes)[:, None, :]
    if net.mode == CLASSIFICATION:
        resid = softmax(logits) - target
    else:
        resid = 2.0 * (logits - target)
    dfeat = resid @ W
    return (dfeat[..., :, None] * psi[:, None, None, :]).reshape(T, n, K)


def square_loss_gradient(theta: np.ndarray, psi: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of ``||y - theta @ psi||^2`` with respect to the activation ``psi``.

    Equals ``2 theta^T (theta psi - y)``, quadratic in ``theta``. Scalars are
    promoted to 1x1 / length-1 arrays.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if theta.shape != (y.shape[0], psi.shape[0]):
        raise DimensionMismatch(
            f"theta {theta.shape} incompatible with psi {psi.shape} and y {y.shape}"
        )
    return 2.0 * theta.T @ (theta @ psi - y)
