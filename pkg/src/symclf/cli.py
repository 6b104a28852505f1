"""Command-line entry point.

Commands: simulate | ingest | train | eval | pareto | explain.
Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime error.

A run directory written by ``train`` is self-describing: it contains the
fully resolved config snapshot (run_config.json, written before the run
starts), the per-iteration log (run_log.jsonl, byte-reproducible for the
same snapshot), the best expression in one-line prefix form
(best_expression.txt), the candidate archive (pareto_archive.jsonl) and
the final policy checkpoint (policy.ckpt).
"""

import argparse
import json
import os
import sys

import numpy as np

from . import data as dta
from .classify import confusion, metrics, predict
from .errors import (
    ConfigInvalid, CsvParseError, DataInvalid, EmptyArchive, SchemaMismatch,
    SingleClass, SymclfError,
)
from .expr import DEFAULT_OPERATORS, Library, deserialize, render_infix
from .featurespec import FeatureSpec
from .pareto import DEFAULT_MIN_GAIN, elbow, pareto_front
from .policy import save_checkpoint
from .rules import extract_rules
from .trainer import TrainConfig, train

_DATA_ERRORS = (SchemaMismatch, CsvParseError, SingleClass, DataInvalid,
                ConfigInvalid, EmptyArchive, FileNotFoundError)

THRESHOLD_SWEEP = (0.5, 0.6, 0.7, 0.8, 0.9)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_dataset(args) -> dta.Dataset:
    if getattr(args, "dataset", None):
        return dta.Dataset.load(args.dataset)
    rows = dta.load_csv(args.data)
    rows.sort(key=lambda r: r.step)  # stable: same-step rows keep file order
    rng = np.random.default_rng(args.data_seed)
    ds = dta.ingest(rows, rng, fractions=tuple(args.fractions),
                    noise_scale=args.noise_scale)
    if getattr(args, "undersample", False):
        ds = dta.undersample(ds, rng)
    return ds


def _add_data_args(p, need_out=False):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="raw transaction CSV")
    src.add_argument("--dataset", help="directory written by `symclf ingest`")
    p.add_argument("--data-seed", type=int, default=0,
                   help="seed for noise and the split permutation")
    p.add_argument("--fractions", type=float, nargs=3, default=list(dta.DEFAULT_FRACTIONS),
                   metavar=("TRAIN", "VAL", "TEST"))
    p.add_argument("--noise-scale", type=float, default=0.01,
                   help="aggregate-noise multiplier on (q75 - min)")
    if need_out:
        p.add_argument("--out", required=True, help="output directory")


def cmd_simulate(args) -> int:
    rows = dta.generate_synthetic(args.rows, args.fraud_rate, args.seed,
                                  label_noise=args.label_noise)
    dta.write_csv(rows, args.out)
    n_fraud = sum(r.isFraud for r in rows)
    print(f"wrote {len(rows)} rows ({n_fraud} fraud, "
          f"rate {n_fraud / len(rows):.4f}) to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    ds = _load_dataset(args)
    ds.save(args.out)
    sizes = {name: int(np.sum(ds.split == code))
             for name, code in dta.SPLIT_NAMES.items()}
    print(f"engineered {ds.X.shape[0]} rows x {ds.X.shape[1]} features -> {args.out}")
    print("split sizes: " + ", ".join(f"{k}={v}" for k, v in sizes.items()))
    return 0


def _train_config(args) -> TrainConfig:
    base = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
    cfg = TrainConfig.from_json(base) if base else TrainConfig()
    overrides = {
        "iterations": args.iterations,
        "batch_size": args.batch_size,
        "epsilon": args.epsilon,
        "threshold": args.threshold,
        "reward": args.reward,
        "seed": args.seed,
        "reward_subsample": args.reward_subsample,
    }
    for key, val in overrides.items():
        if val is not None:
            setattr(cfg, key, val)
    return cfg


def cmd_train(args) -> int:
    cfg = _train_config(args)
    cfg.validate()
    os.makedirs(args.out, exist_ok=True)
    snapshot = {
        "train": cfg.to_json(),
        "data": {
            "csv": args.data,
            "dataset": args.dataset,
            "seed": args.data_seed,
            "fractions": list(args.fractions),
            "noise_scale": args.noise_scale,
            "undersample": bool(args.undersample),
        },
    }
    with open(os.path.join(args.out, "run_config.json"), "w") as fh:
        json.dump(snapshot, fh, indent=2, sort_keys=True)
        fh.write("\n")

    ds = _load_dataset(args)
    result = train(cfg, ds)

    result.log.save(os.path.join(args.out, "run_log.jsonl"))
    with open(os.path.join(args.out, "best_expression.txt"), "w") as fh:
        fh.write(result.best.key + "\n")
    with open(os.path.join(args.out, "pareto_archive.jsonl"), "w") as fh:
        for e in result.archive:
            fh.write(json.dumps({"expression": e.expression,
                                 "complexity": e.complexity,
                                 "f1": e.f1}, sort_keys=True) + "\n")
    save_checkpoint(result.net, os.path.join(args.out, "policy.ckpt"))

    print(f"best expression: {render_infix(result.best.tree)}")
    print(f"  prefix: {result.best.key}")
    print(f"  complexity: {result.best.complexity}")
    print(f"  validation reward ({cfg.reward}, t={cfg.threshold}): "
          f"{result.best_val_reward:.4f}")
    print(f"artifacts in {args.out}")
    return 0


def _expression_from_file(path, feature_names):
    lib = Library.build(list(feature_names), DEFAULT_OPERATORS, include_constant=True)
    with open(path) as fh:
        line = fh.readline().strip()
    return deserialize(line, lib)


def cmd_eval(args) -> int:
    ds = _load_dataset(args)
    tree = _expression_from_file(args.expression, ds.feature_names)
    which = dta.SPLIT_NAMES[args.split]
    X, y = ds.subset(which)
    thresholds = THRESHOLD_SWEEP if args.sweep else (args.threshold,)
    for t in thresholds:
        pred = predict(tree, X, t)
        m = metrics(confusion(pred, y))
        rec = {"threshold": t, "split": args.split,
               "predicted_fraud": int(pred.sum()), **m.as_dict()}
        if args.json:
            print(json.dumps(rec, sort_keys=True))
        else:
            print(f"t={t:.2f} split={args.split} "
                  f"accuracy={m.accuracy:.4f} precision={m.precision:.4f} "
                  f"recall={m.recall:.4f} f1={m.f1:.4f} "
                  f"predicted_fraud={int(pred.sum())}")
    return 0


def cmd_pareto(args) -> int:
    entries = []
    with open(args.archive) as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                entries.append((rec["complexity"], rec["f1"], rec["expression"]))
    front = pareto_front(entries)
    knee = elbow(front, args.min_gain)
    if args.json:
        for p in front:
            print(json.dumps({"complexity": p.complexity, "f1": p.f1,
                              "expression": p.expression,
                              "elbow": p == knee}, sort_keys=True))
    else:
        print(f"{'complexity':>10}  {'f1':>8}  expression")
        for p in front:
            marker = "  <- elbow" if p == knee else ""
            print(f"{p.complexity:>10}  {p.f1:>8.4f}  {p.expression}{marker}")
    return 0


def cmd_explain(args) -> int:
    spec = FeatureSpec.load(args.featurespec)
    tree = _expression_from_file(args.expression, spec.feature_names)
    rules = extract_rules(tree, args.threshold, spec, strict=args.strict)
    if args.json:
        print(json.dumps({"threshold": args.threshold,
                          "raw_cut": rules.raw_cut,
                          "strict": rules.strict,
                          "cases": rules.records()}, sort_keys=True))
    else:
        print(f"expression: {render_infix(tree)}")
        print(rules.describe())
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="symclf",
                     description="Symbolic expression classifiers for fraud data")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic transaction CSV")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--fraud-rate", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label-noise", type=float, default=0.0002)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="engineer features, split and scale")
    _add_data_args(p, need_out=True)
    p.add_argument("--undersample", action="store_true",
                   help="balance the train split by random undersampling")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="run the expression search")
    _add_data_args(p)
    p.add_argument("--undersample", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON training config (flags override it)")
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--reward", choices=("f1", "ce"))
    p.add_argument("--seed", type=int)
    p.add_argument("--reward-subsample", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score an expression file on a split")
    _add_data_args(p)
    p.add_argument("--undersample", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("--expression", required=True)
    p.add_argument("--split", choices=sorted(dta.SPLIT_NAMES), default="test")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--sweep", action="store_true",
                   help="evaluate thresholds 0.5..0.9 instead of --threshold")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pareto", help="Pareto front of an archive file")
    p.add_argument("--archive", required=True)
    p.add_argument("--min-gain", type=float, default=DEFAULT_MIN_GAIN)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("explain", help="decision rules for an expression")
    p.add_argument("--expression", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--featurespec", required=True)
    p.add_argument("--strict", action="store_true",
                   help="use strict > at the decision boundary")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_explain)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except SymclfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
