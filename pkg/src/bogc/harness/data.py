"""Synthetic multi-modal classification data with complementary modalities."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from ..errors import SpecInvalid
from ..model import Batch
from ..numerics import SeededRng


@dataclass
class SyntheticSpec:
    """Class-conditional Gaussians, one informative block per modality.

    Modality ``i`` only separates coarse groups of classes well: classes ``c``
    and ``c'`` share a group prototype when ``((c + i) // 2) % ceil(C / 2)``
    agrees, and differ only by a ``specificity``-scaled offset. Different
    modalities group classes differently, so the combination resolves what
    each one alone confuses.
    """

    num_modalities: int = 2
    input_dims: tuple[int, ...] = (8, 8)
    num_classes: int = 4
    samples_per_class: int = 40
    test_samples_per_class: int = 100
    informative_dims: tuple[tuple[int, ...], ...] = ((0, 1, 2), (0, 1, 2))
    # One entry per modality: a scalar or a per-dimension tuple.
    noise_sigma: tuple = (1.0, 1.0)
    separation: float = 1.5
    specificity: float = 0.35
    label_noise: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        M = self.num_modalities
        if M < 1 or self.num_classes < 2 or self.samples_per_class < 1:
            raise SpecInvalid("need M >= 1, C >= 2 and at least one sample per class")
        if len(self.input_dims) != M or len(self.informative_dims) != M or len(self.noise_sigma) != M:
            raise SpecInvalid("per-modality fields must have one entry per modality")
        for d, inf, sig in zip(self.input_dims, self.informative_dims, self.noise_sigma):
            if not inf or any(not 0 <= j < d for j in inf) or len(set(inf)) != len(inf):
                raise SpecInvalid(f"informative dims {inf} not a subset of [0, {d})")
            sig = np.broadcast_to(np.asarray(sig, dtype=float), (d,))
            if np.any(~(sig > 0)):
                raise SpecInvalid("noise_sigma must be positive")
        if not 0.0 <= self.label_noise < 0.5:
            raise SpecInvalid("label_noise must lie in [0, 0.5)")
        if self.test_samples_per_class < 1:
            raise SpecInvalid("need at least one test sample per class")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noise_sigma"] = [list(s) if isinstance(s, (tuple, list)) else s for s in self.noise_sigma]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        d["input_dims"] = tuple(d["input_dims"])
        d["informative_dims"] = tuple(tuple(x) for x in d["informative_dims"])
        d["noise_sigma"] = tuple(tuple(s) if isinstance(s, list) else s for s in d["noise_sigma"])
        return cls(**d)


@dataclass
class Dataset:
    train: Batch
    test: Batch
    spec: SyntheticSpec
    probe: dict = field(default_factory=dict)

    def digest(self) -> str:
        h = hashlib.sha256()
        for b in (self.train, self.test):
            for x in b.inputs:
                h.update(x.tobytes())
            h.update(b.labels.tobytes())
        return h.hexdigest()


def _group(c: int, i: int, C: int) -> int:
    return ((c + i) // 2) % max(1, -(-C // 2))


def _prototypes(spec: SyntheticSpec, gen: np.random.Generator) -> list[np.ndarray]:
    C = spec.num_classes
    means = []
    for i, (d, inf) in enumerate(zip(spec.input_dims, spec.informative_dims)):
        n_groups = max(1, -(-C // 2))
        group_protos = gen.standard_normal((n_groups, len(inf)))
        class_protos = gen.standard_normal((C, len(inf)))
        mu = np.zeros((C, d))
        for c in range(C):
            mu[c, list(inf)] = spec.separation * (
                group_protos[_group(c, i, C)] + spec.specificity * class_protos[c]
            )
        means.append(mu)
    return means


def _draw(spec, means, per_class, gen, flip: bool) -> Batch:
    C = spec.num_classes
    labels = np.repeat(np.arange(C), per_class)
    inputs = []
    for mu, d, sig in zip(means, spec.input_dims, spec.noise_sigma):
        sig = np.broadcast_to(np.asarray(sig, dtype=float), (d,))
        inputs.append(mu[labels] + gen.standard_normal((labels.size, d)) * sig)
    observed = labels.copy()
    if flip and spec.label_noise > 0:
        mask = gen.random(labels.size) < spec.label_noise
        observed[mask] = gen.integers(0, C, size=int(mask.sum()))
    order = gen.permutation(labels.size)
    return Batch([x[order] for x in inputs], observed[order])


def probe_accuracies(train: Batch, test: Batch) -> dict:
    """Test accuracy of linear softmax probes on each modality and on all of them."""

    def fit(xtr, xte):
        clf = make_pipeline(StandardScaler(), LogisticRegression(max_iter=2000))
        clf.fit(xtr, train.labels)
        return float(clf.score(xtr, train.labels)), float(clf.score(xte, test.labels))

    out = {"unimodal_train": [], "unimodal_test": []}
    for xtr, xte in zip(train.inputs, test.inputs):
        tr, te = fit(xtr, xte)
        out["unimodal_train"].append(tr)
        out["unimodal_test"].append(te)
    tr, te = fit(np.concatenate(train.inputs, axis=1), np.concatenate(test.inputs, axis=1))
    out["joint_train"], out["joint_test"] = tr, te
    return out


def gen_synthetic(spec: SyntheticSpec, require_complementary: bool = True,
                  probe: bool = True) -> Dataset:
    """Deterministic train/test split for ``spec``.

    With ``require_complementary`` the linear probes must show every single
    modality scoring below the joint probe on the test split; otherwise
    :class:`SpecInvalid` is raised.
    """
    spec.validate()
    root = SeededRng(spec.seed, 0)
    means = _prototypes(spec, root.generator)
    train = _draw(spec, means, spec.samples_per_class, root.stream(1).generator, flip=True)
    test = _draw(spec, means, spec.test_samples_per_class, root.stream(2).generator, flip=False)
    ds = Dataset(train, test, spec)
    if probe or require_complementary:
        ds.probe = probe_accuracies(train, test)
        if require_complementary and spec.num_modalities > 1:
            joint = ds.probe["joint_test"]
            if any(a >= joint for a in ds.probe["unimodal_test"]):
                raise SpecInvalid(
                    f"modalities are not complementary: unimodal {ds.probe['unimodal_test']} "
                    f"vs joint {joint}"
                )
    return ds


def save_dataset(ds: Dataset, path) -> None:
    """Write ``ds`` as an ``.npz`` archive, with the SyntheticSpec as a JSON string."""
    arrays = {"spec": np.array(json.dumps(ds.spec.to_dict(), sort_keys=True))}
    for name, b in (("train", ds.train), ("test", ds.test)):
        for i, x in enumerate(b.inputs):
            arrays[f"{name}_x{i}"] = x
        arrays[f"{name}_y"] = b.labels
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_dataset(path) -> Dataset:
    with np.load(path, allow_pickle=False) as z:
        spec = SyntheticSpec.from_dict(json.loads(str(z["spec"])))
        split = {}
        for name in ("train", "test"):
            xs = [z[f"{name}_x{i}"] for i in range(spec.num_modalities)]
            split[name] = Batch(xs, z[f"{name}_y"])
    return Dataset(split["train"], split["test"], spec)
