"""Multi-run studies: the conflict-partitioned aggregator comparison and the s sweep."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..baselines import BOGC, FIXED_BLEND, UNIFORM_SUM
from ..errors import InvalidParameter
from .data import SyntheticSpec, gen_synthetic
from .report import emit_report
from .training import TrainConfig, train

DISCOVERY_ARMS = (UNIFORM_SUM, FIXED_BLEND, BOGC)
CONFLICT_THRESHOLD = 0.5
PARTITIONS = ("conflict", "non_conflict")
S_SWEEP_VALUES = (0.01, 0.05, 0.1, 0.3, 0.5, 0.7, 0.9)


def _run_seeded(args):
    config, spec, require_complementary, out_stem = args
    data = gen_synthetic(spec, require_complementary=require_complementary, probe=require_complementary)
    rec = train(config, data)
    if out_stem is not None:
        for fmt in ("csv", "jsonl"):
            emit_report(rec, fmt, f"{out_stem}.{fmt}")
    return rec.final.worst_group_accuracy, rec.final.accuracy, rec.conflict_fraction


def _stem(out_dir, name: str):
    if out_dir is None:
        return None
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    return str(Path(out_dir) / name)


def _map(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


@dataclass
class DiscoveryRun:
    repeat: int
    arm: str
    worst_group_accuracy: float
    accuracy: float
    conflict_fraction: float
    # Partition of the repeat, shared by all arms.
    partition: str


@dataclass
class DiscoveryReport:
    arms: tuple[str, ...]
    repeats: int
    reference_arm: str
    runs: list[DiscoveryRun] = field(default_factory=list)

    def cells(self) -> list[dict]:
        """One cell per (repeat, arm, partition); runs outside a partition leave it empty."""
        out = []
        for r in self.runs:
            for p in PARTITIONS:
                out.append({"repeat": r.repeat, "arm": r.arm, "partition": p,
                            "worst_group_accuracy": r.worst_group_accuracy if r.partition == p else None})
        return out

    def run(self, repeat: int, arm: str) -> DiscoveryRun:
        for r in self.runs:
            if r.repeat == repeat and r.arm == arm:
                return r
        raise KeyError((repeat, arm))

    def repeats_in(self, partition: str) -> list[int]:
        return sorted({r.repeat for r in self.runs if r.partition == partition})

    def counts(self, arm: str) -> dict[str, int]:
        return {p: sum(1 for r in self.runs if r.arm == arm and r.partition == p) for p in PARTITIONS}

    def mean_worst(self, arm: str, partition: str) -> Optional[float]:
        vals = [r.worst_group_accuracy for r in self.runs if r.arm == arm and r.partition == partition]
        return float(np.mean(vals)) if vals else None

    def underperform_count(self, arm: str, partition: str, reference: str = UNIFORM_SUM) -> int:
        """Repeats in ``partition`` where ``arm`` scores strictly below ``reference``."""
        return sum(
            self.run(k, arm).worst_group_accuracy < self.run(k, reference).worst_group_accuracy
            for k in self.repeats_in(partition)
        )

    def conflict_dominant_fraction(self) -> float:
        return len(self.repeats_in("conflict")) / self.repeats if self.repeats else 0.0

    def table(self) -> list[dict]:
        rows = []
        for arm in self.arms:
            for p in PARTITIONS:
                rows.append({"arm": arm, "partition": p, "runs": self.counts(arm)[p],
                             "mean_worst_group_accuracy": self.mean_worst(arm, p),
                             "below_uniform": self.underperform_count(arm, p)})
        return rows

    def format_table(self) -> str:
        lines = [f"{'arm':<22}{'partition':<14}{'runs':>5}{'worst acc':>11}{'< uniform':>11}"]
        for row in self.table():
            m = row["mean_worst_group_accuracy"]
            lines.append(f"{row['arm']:<22}{row['partition']:<14}{row['runs']:>5}"
                         f"{'-' if m is None else format(m, '.4f'):>11}{row['below_uniform']:>11}")
        return "\n".join(lines)


def run_discovery(config: TrainConfig, repeats: int, spec: SyntheticSpec | None = None,
                  arms: Sequence[str] = DISCOVERY_ARMS, workers: int = 1,
                  require_complementary: bool = True, out_dir=None) -> DiscoveryReport:
    """Train every arm on ``repeats`` seeded datasets and partition the repeats by conflict.

    Repeat ``k`` uses data seed ``spec.seed + k`` and training seed
    ``config.seed + k``. A repeat is conflict-dominant when more than half of
    the steps of its uniform-sum run flag a unimodal/fusion conflict; the
    same label applies to every arm so that arms are compared on identical
    seeds. With ``out_dir`` every run is also written as CSV and JSONL.
    """
    if repeats < 5:
        raise InvalidParameter("discovery needs at least five repeats")
    spec = spec or SyntheticSpec()
    arms = tuple(arms)
    reference = UNIFORM_SUM if UNIFORM_SUM in arms else arms[0]
    jobs, keys = [], []
    for k in range(repeats):
        s = SyntheticSpec.from_dict({**spec.to_dict(), "seed": spec.seed + k})
        for arm in arms:
            jobs.append((config.replace(aggregator=arm, seed=config.seed + k), s,
                         require_complementary, _stem(out_dir, f"discovery_{k:03d}_{arm}")))
            keys.append((k, arm))
    results = dict(zip(keys, _map(_run_seeded, jobs, workers)))
    report = DiscoveryReport(arms, repeats, reference)
    for k in range(repeats):
        part = "conflict" if results[(k, reference)][2] > CONFLICT_THRESHOLD else "non_conflict"
        for arm in arms:
            worst, acc, frac = results[(k, arm)]
            report.runs.append(DiscoveryRun(k, arm, worst, acc, frac, part))
    return report


@dataclass
class AblationReport:
    s_values: tuple[float, ...]
    seeds: int
    # accuracies[j][k]: final test accuracy for s_values[j], seed k.
    accuracies: list[list[float]]

    @property
    def mean(self) -> list[float]:
        return [float(np.mean(a)) for a in self.accuracies]

    @property
    def std(self) -> list[float]:
        return [float(np.std(a)) for a in self.accuracies]

    @property
    def spread(self) -> float:
        return max(self.mean) - min(self.mean)

    def columns(self) -> list[dict]:
        return [{"s": s, "mean": m, "std": d} for s, m, d in zip(self.s_values, self.mean, self.std)]

    def all_finite(self) -> bool:
        return all(math.isfinite(v) for a in self.accuracies for v in a)

    def format_table(self) -> str:
        return "\n".join(f"s={c['s']:<6g} acc {c['mean']:.4f} +- {c['std']:.4f}" for c in self.columns())


def run_s_ablation(config: TrainConfig, s_values: Sequence[float] = S_SWEEP_VALUES,
                   seeds: int = 5, spec: SyntheticSpec | None = None, workers: int = 1,
                   require_complementary: bool = True, out_dir=None) -> AblationReport:
    """One calibrated run per (s, seed); seed ``k`` shifts both data and training seeds."""
    s_values = tuple(float(s) for s in s_values)
    if not s_values or any(not s > 0 for s in s_values):
        raise InvalidParameter("s values must be positive")
    if seeds < 1:
        raise InvalidParameter("need at least one seed")
    spec = spec or SyntheticSpec()
    jobs = []
    for s in s_values:
        for k in range(seeds):
            ds = SyntheticSpec.from_dict({**spec.to_dict(), "seed": spec.seed + k})
            jobs.append((config.replace(aggregator=BOGC, s=s, seed=config.seed + k), ds,
                         require_complementary, _stem(out_dir, f"ablate_s{s:g}_{k:03d}")))
    out = _map(_run_seeded, jobs, workers)
    accs = [[out[j * seeds + k][1] for k in range(seeds)] for j in range(len(s_values))]
    return AblationReport(s_values, seeds, accs)
