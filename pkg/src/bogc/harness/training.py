"""Training loop wiring the gradient-calibration pipeline into SGD with momentum."""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..baselines import (
    BOGC,
    CONFLICT_PROJECTION,
    FIXED_BLEND,
    UNIFORM_SUM,
    AggregatorKind,
    conflict_projection,
    detect_conflict,
    fixed_blend,
    uniform_sum,
)
from ..errors import BogcError, InvalidParameter, TrainingError, ZeroGradient
from ..evidence import (
    S_RANGE,
    aggregate_gradient,
    calibrated_step,
    dempster_combine,
    mass_from_precisions,
)
from ..graddist import DEFAULT_MC_SAMPLES, moments_from_samples, precision_diagonal_of
from ..model import (
    Batch,
    ToyMultiModalNet,
    backward,
    compute_losses,
    forward,
    theta_sample_gradients,
)
from ..numerics import JITTER_START, SeededRng, sample_gaussian, symmetrize
from ..posterior import PriorSpec, modality_posterior
from .data import Dataset

_STREAM_INIT = 1
_STREAM_SHUFFLE = 2
_STREAM_MC = 1000


@dataclass
class TrainConfig:
    aggregator: str = BOGC
    blend_weight: float = 0.5
    s: float = 0.5
    gamma: float = 1.5
    phi: float = 1.0
    lr: float = 0.1
    momentum: float = 0.9
    mc_samples: int = DEFAULT_MC_SAMPLES
    epochs: int = 15
    batch_size: int = 32
    prior_variance: float = 1.0
    seed: int = 0
    hidden_dim: int = 16
    feature_dim: int = 4
    per_sample: bool = True
    jitter: float = JITTER_START
    # Keep the Newton correction -H^{-1} q in the posterior mean used for sampling.
    posterior_mean_shift: bool = False

    def validate(self) -> None:
        AggregatorKind(self.aggregator, self.blend_weight)
        checks = {
            "s": self.s > 0,
            "gamma": self.gamma > 0,
            "phi": self.phi >= 0,
            "lr": self.lr >= 0,
            "momentum": 0 <= self.momentum < 1,
            "mc_samples": self.mc_samples >= 2,
            "epochs": self.epochs >= 0,
            "batch_size": self.batch_size >= 1,
            "prior_variance": self.prior_variance > 0,
            "seed": self.seed >= 0,
            "hidden_dim": self.hidden_dim >= 1,
            "feature_dim": self.feature_dim >= 1,
            "jitter": self.jitter > 0,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise InvalidParameter(f"invalid TrainConfig fields: {bad}")

    @property
    def aggregator_kind(self) -> AggregatorKind:
        return AggregatorKind(self.aggregator, self.blend_weight)

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidParameter(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json_file(cls, path) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class StepRecord:
    epoch: int
    step: int
    loss_fusion: float
    loss_uni: tuple[float, ...]
    loss_total: float
    conflict: bool
    # Batch-mean joint uncertainty and conflict mass; only the calibrated arm has them.
    u_joint: Optional[float] = None
    c_joint: Optional[float] = None


@dataclass
class EpochRecord:
    """Test metrics after ``epoch`` passes (epoch 0 is the untrained net)."""

    epoch: int
    accuracy: float
    modality_accuracy: tuple[float, ...]
    worst_group_accuracy: float
    train_loss: float


@dataclass
class ExperimentRecord:
    aggregator: str = ""
    config: dict = field(default_factory=dict)
    steps: list[StepRecord] = field(default_factory=list)
    epochs: list[EpochRecord] = field(default_factory=list)
    wall_clock: float = field(default=0.0, compare=False)

    @property
    def conflict_fraction(self) -> float:
        if not self.steps:
            return 0.0
        return sum(s.conflict for s in self.steps) / len(self.steps)

    @property
    def final(self) -> EpochRecord:
        return self.epochs[-1]


def evaluate(net: ToyMultiModalNet, batch: Batch) -> tuple[float, tuple[float, ...], float]:
    """Fusion accuracy, per-modality head accuracies, and worst per-class accuracy."""
    fwd = forward(net, batch)
    y = batch.labels
    pred = np.argmax(fwd.fusion_logits, axis=1)
    acc = float(np.mean(pred == y))
    mod = tuple(float(np.mean(np.argmax(z, axis=1) == y)) for z in fwd.uni_logits)
    per_class = [float(np.mean(pred[y == c] == c)) for c in np.unique(y)]
    return acc, mod, min(per_class)


@dataclass
class Calibration:
    update: list[np.ndarray]
    u_joint: float
    c_joint: float
    trace: list[dict]


def bogc_directions(net: ToyMultiModalNet, batch: Batch, cfg: TrainConfig, step: int,
                    trace: bool = False, posterior_sink: dict | None = None) -> Calibration:
    """Calibrated last-layer update for every modality at the current weights."""
    prior = PriorSpec(cfg.prior_variance)
    fwd = forward(net, batch)
    T, n, K, M = batch.size, cfg.mc_samples, net.theta_dim, net.num_modalities
    mus, covs, lams = [], [], []
    for i in range(M):
        post = modality_posterior(net, batch, i, prior, shift=cfg.posterior_mean_shift)
        if posterior_sink is not None:
            posterior_sink[i] = post
        rng = SeededRng(cfg.seed, _STREAM_MC + step * M + i)
        if cfg.per_sample:
            thetas = sample_gaussian(post.mean, post.chol_factor, rng, size=(T, n))
            grads = theta_sample_gradients(net, i, fwd.psi[i], batch.labels, thetas)
        else:
            shared = sample_gaussian(post.mean, post.chol_factor, rng, size=n)
            thetas = np.broadcast_to(shared, (T, n, K))
            grads = theta_sample_gradients(net, i, fwd.psi[i], batch.labels, thetas).sum(axis=0, keepdims=True)
        mu, cov, lam, _ = moments_from_samples(grads, cfg.jitter)
        mus.append(mu)
        covs.append(cov)
        lams.append(lam)

    mu_f = sum(mus) / M
    if M == 1:
        cov_f, lam_f = covs[0], lams[0]
    else:
        cov_f = symmetrize(sum(covs) / M)
        lam_f = precision_diagonal_of(cov_f)
    m_f = mass_from_precisions(lam_f, cfg.s)

    updates, us, cs, rows = [], [], [], []
    for i in range(M):
        m_i = mass_from_precisions(lams[i], cfg.s)
        joint = dempster_combine(m_i, m_f)
        g = aggregate_gradient(joint, m_i, m_f, mus[i], mu_f)
        updates.append(calibrated_step(g, cfg.gamma))
        us.append(np.mean(joint.uncertainty))
        cs.append(np.mean(joint.conflict))
        if trace:
            rows.extend(_trace_rows(step, i, lams[i], lam_f, m_i, m_f, joint))
    return Calibration(updates, float(np.mean(us)), float(np.mean(cs)), rows)


def _trace_rows(step, i, lam_i, lam_f, m_i, m_f, joint) -> list[dict]:
    K = lam_i.shape[-1]
    avg = lambda a: np.mean(np.atleast_2d(a), axis=0)  # noqa: E731
    li, lf, bi, bf, bj = (avg(a) for a in (lam_i, lam_f, m_i.beliefs, m_f.beliefs, joint.beliefs))
    u = float(np.mean(joint.uncertainty))
    c = float(np.mean(joint.conflict))
    return [
        {"step": step, "modality": i, "d": d, "lambda_i": float(li[d]),
         "lambda_fusion": float(lf[d]), "b_i": float(bi[d]), "b_fusion": float(bf[d]),
         "b_joint": float(bj[d]), "u_joint": u, "C": c}
        for d in range(K)
    ]


def _baseline_direction(kind: AggregatorKind, g_uni, g_fus, phi):
    if kind.tag == UNIFORM_SUM:
        return uniform_sum(phi * g_uni, g_fus)
    if kind.tag == FIXED_BLEND:
        return fixed_blend(phi * g_uni, g_fus, kind.weight)
    if kind.tag == CONFLICT_PROJECTION:
        return conflict_projection(phi * g_uni, g_fus)
    raise InvalidParameter(kind.tag)


def _step_conflict(report) -> bool:
    flags = []
    for gu, gf in zip(report.uni, report.fusion):
        try:
            flags.append(detect_conflict(gu, gf))
        except ZeroGradient:
            flags.append(False)
    return any(flags)


def train(config: TrainConfig, data: Dataset, trace: list | None = None,
          posterior_sink: dict | None = None, net: ToyMultiModalNet | None = None,
          ) -> ExperimentRecord:
    """Train a fresh toy net and record losses, conflicts and test metrics.

    ``trace`` (a list) receives per-dimension mass summaries for the calibrated
    arm; ``posterior_sink`` (a dict) receives the latest posterior per modality.
    """
    config.validate()
    t0 = time.perf_counter()
    kind = config.aggregator_kind
    train_set, test_set = data.train, data.test
    if net is None:
        net = ToyMultiModalNet.init(
            [x.shape[1] for x in train_set.inputs], config.hidden_dim, config.feature_dim,
            int(data.spec.num_classes), rng=SeededRng(config.seed, _STREAM_INIT),
        )
    velocity = {k: np.zeros_like(v) for k, v in net.params.items()}
    shuffle = SeededRng(config.seed, _STREAM_SHUFFLE).generator
    record = ExperimentRecord(str(kind), config.to_dict())

    def log_epoch(epoch):
        acc, mod, worst = evaluate(net, test_set)
        loss = compute_losses(net, train_set, config.phi).total
        record.epochs.append(EpochRecord(epoch, acc, mod, worst, loss))

    log_epoch(0)
    N = train_set.size
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = shuffle.permutation(N)
        for start in range(0, N, config.batch_size):
            batch = train_set.take(order[start:start + config.batch_size])
            try:
                report = backward(net, batch, config.phi)
                grads = dict(report.params)
                u_joint = c_joint = None
                if kind.tag == BOGC:
                    cal = bogc_directions(net, batch, config, step, trace is not None,
                                          posterior_sink)
                    for i, upd in enumerate(cal.update):
                        grads[f"enc{i}.w2"] = upd.reshape(net.params[f"enc{i}.w2"].shape)
                    u_joint, c_joint = cal.u_joint, cal.c_joint
                    if trace is not None:
                        trace.extend(cal.trace)
                else:
                    for i, (gu, gf) in enumerate(zip(report.uni, report.fusion)):
                        d = _baseline_direction(kind, gu, gf, config.phi)
                        grads[f"enc{i}.w2"] = d.reshape(net.params[f"enc{i}.w2"].shape)
                for k, g in grads.items():
                    v = velocity[k]
                    v *= config.momentum
                    v += g
                    net.params[k] = net.params[k] - config.lr * v
                if not net.all_finite():
                    raise FloatingPointError("non-finite parameters after update")
            except (BogcError, FloatingPointError, np.linalg.LinAlgError) as exc:
                raise TrainingError(step, exc) from exc
            L = report.losses
            record.steps.append(StepRecord(epoch, step, L.fusion, tuple(L.uni), L.total,
                                           _step_conflict(report), u_joint, c_joint))
            step += 1
        log_epoch(epoch)
    record.wall_clock = time.perf_counter() - t0
    return record


__all__ = [
    "TrainConfig", "StepRecord", "EpochRecord", "ExperimentRecord", "train", "evaluate",
    "bogc_directions", "S_RANGE",
]
