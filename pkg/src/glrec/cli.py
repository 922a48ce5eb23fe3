"""Command-line entry points: train, eval, predict, synth, bench."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .bench import scaling_bench
from .data import generate_synthetic
from .trainer import TrainConfig, evaluate_state, load_checkpoint, predict_pair, train


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for f in dataclasses.fields(TrainConfig):
        kind = type(f.default)
        parser.add_argument(f"--{f.name}", type=kind, default=f.default, help=f"(default: {f.default})")


def _config_from_args(args) -> TrainConfig:
    values = {f.name: getattr(args, f.name) for f in dataclasses.fields(TrainConfig)}
    return TrainConfig(**values)


def _report_dict(report) -> dict:
    return {
        "rmse": report.rmse, "mae": report.mae, "n_evaluated": report.n_evaluated,
        "n_cold": report.n_cold, "seconds": report.seconds, "sim_ops": report.sim_ops,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glrec", description="Graph-learning recommender")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model")
    p_train.add_argument("--ratings", required=True)
    p_train.add_argument("--links", required=True)
    p_train.add_argument("--out_dir", required=True)
    _add_config_flags(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--split", default="test", choices=("train", "valid", "test"))
    p_eval.add_argument("--ratings", default=None, help="override the recorded ratings path")
    p_eval.add_argument("--links", default=None, help="override the recorded links path")

    p_pred = sub.add_parser("predict", help="predict one user-item rating")
    p_pred.add_argument("--checkpoint", required=True)
    p_pred.add_argument("--user", required=True)
    p_pred.add_argument("--item", required=True)
    p_pred.add_argument("--ratings", default=None)
    p_pred.add_argument("--links", default=None)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--n_users", type=int, required=True)
    p_synth.add_argument("--n_items", type=int, required=True)
    p_synth.add_argument("--n_ratings", type=int, required=True)
    p_synth.add_argument("--n_links", type=int, required=True)
    p_synth.add_argument("--noise_frac", type=float, default=0.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out_dir", required=True)

    p_bench = sub.add_parser("bench", help="refinement scaling benchmark")
    p_bench.add_argument("--sizes", default="2000,4000,8000", help="comma-separated user counts")
    p_bench.add_argument("--taus", default="0.0,1.0,0.05", help="comma-separated anchor rates (0 = full)")
    p_bench.add_argument("--batch", type=int, default=128)
    p_bench.add_argument("--n_batches", type=int, default=3)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out_dir", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            result = train(_config_from_args(args), args.ratings, args.links, args.out_dir)
            for rec in result.epochs:
                print(json.dumps({
                    "epoch": rec.epoch, "split": "valid", "rmse": rec.valid.rmse, "mae": rec.valid.mae,
                    "seconds": rec.seconds + rec.valid.seconds, "sim_ops": rec.sim_ops + rec.valid.sim_ops,
                }))
            print(json.dumps({"split": "test", "best_epoch": result.best_epoch, **_report_dict(result.test)}))
            print(f"checkpoint: {result.checkpoint_path}", file=sys.stderr)
        elif args.command == "eval":
            state = load_checkpoint(args.checkpoint, args.ratings, args.links)
            print(json.dumps({"split": args.split, **_report_dict(evaluate_state(state, args.split))}))
        elif args.command == "predict":
            state = load_checkpoint(args.checkpoint, args.ratings, args.links)
            print(json.dumps({"user": args.user, "item": args.item,
                              "prediction": predict_pair(state, args.user, args.item)}))
        elif args.command == "synth":
            paths = generate_synthetic(args.n_users, args.n_items, args.n_ratings, args.n_links,
                                       args.noise_frac, args.seed, args.out_dir)
            print(json.dumps({"ratings": paths[0], "links": paths[1], "manifest": paths[2]}))
        elif args.command == "bench":
            sizes = tuple(int(s) for s in args.sizes.split(","))
            taus = tuple(float(s) for s in args.taus.split(","))
            for row in scaling_bench(sizes, taus, args.batch, args.n_batches, seed=args.seed, work_dir=args.out_dir):
                print(json.dumps(row))
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
