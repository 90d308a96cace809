"""CSV / JSONL serialization of experiment records.

Both formats hold one row per training step and one per epoch evaluation,
told apart by a ``kind`` column, plus a leading ``config`` row when the record
carries a config snapshot. Floats are written with 17 significant digits, so
reading a file back reproduces the record exactly. Wall-clock time is never
written; it would break byte-level reproducibility.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .training import EpochRecord, ExperimentRecord, StepRecord

FORMATS = ("csv", "jsonl")


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".17g")


def _columns(M: int) -> list[str]:
    return (
        ["kind", "aggregator", "epoch", "step", "loss_fusion"]
        + [f"loss_uni_{i}" for i in range(M)]
        + ["loss_total", "conflict", "u_joint", "c_joint", "accuracy"]
        + [f"acc_modality_{i}" for i in range(M)]
        + ["worst_group_accuracy", "train_loss", "config"]
    )


def _num_modalities(record: ExperimentRecord) -> int:
    if record.steps:
        return len(record.steps[0].loss_uni)
    if record.epochs:
        return len(record.epochs[0].modality_accuracy)
    return 0


def _rows(record: ExperimentRecord):
    """Yield one dict per row, with JSON-native values."""
    if record.config:
        yield {"kind": "config", "aggregator": record.aggregator, "config": record.config}
    for s in record.steps:
        row = {"kind": "step", "aggregator": record.aggregator, "epoch": s.epoch,
               "step": s.step, "loss_fusion": s.loss_fusion}
        row.update({f"loss_uni_{i}": v for i, v in enumerate(s.loss_uni)})
        row.update(loss_total=s.loss_total, conflict=s.conflict, u_joint=s.u_joint,
                   c_joint=s.c_joint)
        yield row
    for e in record.epochs:
        row = {"kind": "epoch", "aggregator": record.aggregator, "epoch": e.epoch,
               "accuracy": e.accuracy}
        row.update({f"acc_modality_{i}": v for i, v in enumerate(e.modality_accuracy)})
        row.update(worst_group_accuracy=e.worst_group_accuracy, train_loss=e.train_loss)
        yield row


def dumps(record: ExperimentRecord, fmt: str = "csv") -> str:
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    if fmt == "jsonl":
        lines = []
        for row in _rows(record):
            items = []
            for k in sorted(row):
                v = row[k]
                if isinstance(v, float):
                    text = format(v, ".17g")
                else:
                    text = json.dumps(v, sort_keys=True)
                items.append(f"{json.dumps(k)}: {text}")
            lines.append("{" + ", ".join(items) + "}\n")
        return "".join(lines)
    cols = _columns(_num_modalities(record))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in _rows(record):
        out = []
        for c in cols:
            v = row.get(c)
            if c == "config":
                out.append(json.dumps(v, sort_keys=True) if v is not None else "")
            elif c in ("kind", "aggregator"):
                out.append(v)
            else:
                out.append(_num(v))
        w.writerow(out)
    return buf.getvalue()


def emit_report(record: ExperimentRecord, fmt: str, path) -> Path:
    path = Path(path)
    text = dumps(record, fmt)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _from_rows(rows: list[dict]) -> ExperimentRecord:
    rec = ExperimentRecord()
    for r in rows:
        kind = r["kind"]
        rec.aggregator = r.get("aggregator") or rec.aggregator
        if kind == "config":
            rec.config = r["config"]
            continue
        M = sum(1 for k in r if k.startswith("loss_uni_"))
        if kind == "step":
            rec.steps.append(StepRecord(
                int(r["epoch"]), int(r["step"]), float(r["loss_fusion"]),
                tuple(float(r[f"loss_uni_{i}"]) for i in range(M)), float(r["loss_total"]),
                bool(r["conflict"]),
                None if r.get("u_joint") is None else float(r["u_joint"]),
                None if r.get("c_joint") is None else float(r["c_joint"]),
            ))
        elif kind == "epoch":
            Mm = sum(1 for k in r if k.startswith("acc_modality_"))
            rec.epochs.append(EpochRecord(
                int(r["epoch"]), float(r["accuracy"]),
                tuple(float(r[f"acc_modality_{i}"]) for i in range(Mm)),
                float(r["worst_group_accuracy"]), float(r["train_loss"]),
            ))
        else:
            raise ValueError(f"unknown row kind {kind!r}")
    return rec


def loads(text: str, fmt: str = "csv") -> ExperimentRecord:
    if fmt == "jsonl":
        return _from_rows([json.loads(line) for line in text.splitlines() if line.strip()])
    reader = csv.DictReader(io.StringIO(text))
    rows = []
    for r in reader:
        kind = r["kind"]
        parsed: dict = {"kind": kind, "aggregator": r["aggregator"]}
        if kind == "config":
            parsed["config"] = json.loads(r["config"])
        else:
            # Columns that do not apply to this row kind are empty.
            for k, v in r.items():
                if k in ("kind", "aggregator", "config") or v == "":
                    continue
                parsed[k] = int(v) if k in ("epoch", "step", "conflict") else float(v)
        rows.append(parsed)
    return _from_rows(rows)


def read_report(path, fmt: str | None = None) -> ExperimentRecord:
    path = Path(path)
    fmt = fmt or ("jsonl" if path.suffix == ".jsonl" else "csv")
    return loads(path.read_text(), fmt)
