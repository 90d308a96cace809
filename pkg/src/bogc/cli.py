"""Command-line entry point: ``bogc {gen-data,train,discovery,ablate-s}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .baselines import AGGREGATORS
from .errors import BogcError
from .harness.data import SyntheticSpec, gen_synthetic, load_dataset, save_dataset
from .harness.report import FORMATS, dumps, emit_report
from .harness.studies import S_SWEEP_VALUES, run_discovery, run_s_ablation
from .harness.training import TrainConfig, train

# CLI flag -> TrainConfig field
_CONFIG_FLAGS = {
    "aggregator": str, "s": float, "gamma": float, "phi": float, "lr": float,
    "momentum": float, "mc_samples": int, "epochs": int, "batch_size": int, "seed": int,
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with TrainConfig fields")
    for name, typ in _CONFIG_FLAGS.items():
        kw = {"type": typ, "default": None}
        if name == "aggregator":
            kw["help"] = f"one of {', '.join(AGGREGATORS)}; fixed_blend may carry a weight, e.g. fixed_blend:0.3"
        p.add_argument("--" + name.replace("_", "-"), dest=name, **kw)
    p.add_argument("--batch-averaged", action="store_true",
                   help="one gradient distribution per batch instead of per item")
    p.add_argument("--posterior-mean-shift", action="store_true",
                   help="keep the Newton correction in the posterior mean")


def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--spec", type=Path, help="JSON file with SyntheticSpec fields")
    p.add_argument("--data-seed", type=int, default=None)


def _config(args) -> TrainConfig:
    base = TrainConfig.from_json_file(args.config).to_dict() if args.config else TrainConfig().to_dict()
    for name in _CONFIG_FLAGS:
        v = getattr(args, name)
        if v is not None:
            base[name] = v
    agg = base["aggregator"]
    if ":" in agg:
        tag, w = agg.split(":", 1)
        base["aggregator"], base["blend_weight"] = tag, float(w)
    if args.batch_averaged:
        base["per_sample"] = False
    if args.posterior_mean_shift:
        base["posterior_mean_shift"] = True
    cfg = TrainConfig.from_dict(base)
    cfg.validate()
    return cfg


def _spec(args) -> SyntheticSpec:
    spec = SyntheticSpec.from_dict(json.loads(args.spec.read_text())) if args.spec else SyntheticSpec()
    if args.data_seed is not None:
        spec = SyntheticSpec.from_dict({**spec.to_dict(), "seed": args.data_seed})
    spec.validate()
    return spec


def _write_text(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_gen_data(args) -> int:
    ds = gen_synthetic(_spec(args))
    save_dataset(ds, args.out)
    print(json.dumps({"digest": ds.digest(), "probe": ds.probe}, sort_keys=True))
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    data = load_dataset(args.data) if args.data else gen_synthetic(_spec(args))
    trace = [] if args.trace_masses else None
    sink = {} if args.dump_posterior else None
    rec = train(cfg, data, trace=trace, posterior_sink=sink)
    if args.out:
        emit_report(rec, args.format, args.out)
    else:
        sys.stdout.write(dumps(rec, args.format))
    if trace is not None:
        with open(args.trace_masses, "w") as fh:
            for row in trace:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    if sink is not None:
        snap = {str(i): post.to_json() for i, post in sorted(sink.items())}
        Path(args.dump_posterior).write_text(json.dumps(snap, sort_keys=True))
    return 0


def cmd_discovery(args) -> int:
    report = run_discovery(_config(args), args.repeats, _spec(args), workers=args.workers,
                           out_dir=args.runs_dir)
    if args.format == "jsonl":
        text = "".join(json.dumps(c, sort_keys=True) + "\n" for c in report.cells())
    else:
        text = report.format_table() + "\n"
    _write_text(text, args.out)
    return 0


def cmd_ablate_s(args) -> int:
    report = run_s_ablation(_config(args), args.s_values, args.seeds, _spec(args),
                            workers=args.workers, out_dir=args.runs_dir)
    if args.format == "jsonl":
        text = "".join(json.dumps(c, sort_keys=True) + "\n" for c in report.columns())
    else:
        text = report.format_table() + "\n"
    _write_text(text, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bogc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset (.npz)")
    _add_spec_flags(p)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one run and write its record")
    _add_config_flags(p)
    _add_spec_flags(p)
    p.add_argument("--data", type=Path, help="dataset from gen-data (default: generate)")
    p.add_argument("--out", type=Path)
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.add_argument("--trace-masses", type=Path, metavar="PATH",
                   help="JSONL of per-dimension precisions and masses (calibrated arm)")
    p.add_argument("--dump-posterior", type=Path, metavar="PATH",
                   help="JSON snapshot of the last posterior per modality")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("discovery", cmd_discovery, "conflict-partitioned aggregator comparison"),
                                 ("ablate-s", cmd_ablate_s, "sweep the evidence exponent s")):
        p = sub.add_parser(name, help=helptext)
        _add_config_flags(p)
        _add_spec_flags(p)
        p.add_argument("--out", type=Path)
        p.add_argument("--format", choices=("table", "jsonl"), default="table")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--runs-dir", type=Path, help="also write every run's CSV and JSONL here")
        if name == "discovery":
            p.add_argument("--repeats", type=int, default=20)
        else:
            p.add_argument("--s-values", type=float, nargs="+", default=list(S_SWEEP_VALUES))
            p.add_argument("--seeds", type=int, default=5)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BogcError as exc:
        print(f"bogc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
