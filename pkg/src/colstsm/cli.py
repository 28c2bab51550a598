"""Command-line entry point: ``colstsm {gen,train,eval,curve,gradcheck}``.

Exit codes: 0 success, 1 usage error, 2 data/model error, 3 gradient check
failure.
"""

import argparse
from dataclasses import asdict
import json
import logging
from pathlib import Path
import sys
import time

from . import bptt
from .cells import FAMILIES
from .evaluator import evaluate, observation_curve
from .persist import CheckpointError, load_checkpoint, save_checkpoint
from .synthdata import (DatasetFormatError, GenConfig, LAG_FILLS, RELATIONS,
                        generate_dataset, read_dataset, write_dataset)
from .trainer import TrainConfig, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_GRADCHECK = 0, 1, 2, 3

log = logging.getLogger("colstsm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(text):
    if text == "auto":
        return "auto"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer or 'auto', got {text!r}") from None


def _resolve_seed(seed):
    if seed == "auto":
        return time.time_ns() & 0xFFFFFFFF
    return seed


def _dims(text):
    try:
        parts = [int(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"dims must be four integers n,m,k,T, got {text!r}") from None
    if len(parts) != 4 or min(parts) < 1:
        raise argparse.ArgumentTypeError(f"dims must be four positive integers n,m,k,T, got {text!r}")
    if parts[2] < 2:
        raise argparse.ArgumentTypeError("dims: need at least k=2 classes")
    return parts


def _print_config(command, cfg):
    print(f"# {command} " + json.dumps(cfg, sort_keys=True), flush=True)


def build_parser():
    p = _Parser(prog="colstsm", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic paired-stream dataset")
    d = GenConfig()
    g.add_argument("--classes", type=int, default=d.classes)
    g.add_argument("--train-per-class", type=int, default=d.train_per_class)
    g.add_argument("--test-per-class", type=int, default=d.test_per_class)
    g.add_argument("--seq-len", type=int, default=d.seq_len)
    g.add_argument("--input-dim", type=int, default=d.input_dim)
    g.add_argument("--motifs", type=int, default=d.motif_pool_size,
                   help="motif pool size; 0 draws a fresh motif per sample")
    g.add_argument("--lag", type=int, default=d.lag)
    g.add_argument("--lag-fill", choices=LAG_FILLS, default=d.lag_fill,
                   help="lagged stream before t=L: continue the motif or zero-pad")
    g.add_argument("--noise", type=float, default=d.noise_sigma)
    g.add_argument("--seed", type=_seed, default=d.seed)
    g.add_argument("--out", required=True, help="output directory for train.jsonl/test.jsonl")

    t = sub.add_parser("train", help="train one model family")
    d = TrainConfig()
    t.add_argument("--data", required=True, help="dataset directory")
    t.add_argument("--model", choices=FAMILIES, default=d.model)
    t.add_argument("--hidden", type=int, default=d.hidden)
    t.add_argument("--epochs", type=int, default=d.epochs)
    t.add_argument("--lr", type=float, default=d.learning_rate)
    t.add_argument("--momentum", type=float, default=d.momentum)
    t.add_argument("--decay", type=float, default=d.decay)
    t.add_argument("--batch-size", type=int, default=d.batch_size)
    t.add_argument("--bptt", choices=bptt.MODES, default=d.bptt)
    t.add_argument("--clip-norm", type=float, default=None)
    t.add_argument("--compat-tanh", action="store_true",
                   help="squash logits with tanh before the softmax")
    t.add_argument("--seed", type=_seed, default=d.seed)
    t.add_argument("--checkpoint", required=True)
    t.add_argument("--history", help="history CSV path (default: <checkpoint>.history.csv)")

    for name, helptext in (("eval", "accuracy and confusion matrix"),
                           ("curve", "accuracy versus observation ratio")):
        e = sub.add_parser(name, help=helptext)
        e.add_argument("--checkpoint", required=True)
        e.add_argument("--data", required=True, help="dataset directory")
        e.add_argument("--split", choices=("train", "test"), default="test")
        e.add_argument("--average-steps", action="store_true",
                       help="average per-step scores instead of using the last step")
        e.add_argument("--csv", help="write machine-readable results here")

    c = sub.add_parser("gradcheck", help="compare analytic and numerical gradients")
    c.add_argument("--model", choices=FAMILIES, default="colstsm")
    c.add_argument("--dims", type=_dims, default=[2, 3, 2, 4], help="n,m,k,T")
    c.add_argument("--eps", type=float, default=1e-5)
    c.add_argument("--tol", type=float, default=1e-5)
    c.add_argument("--seed", type=_seed, default=0)
    c.add_argument("--compat-tanh", action="store_true")
    c.add_argument("--json", help="write the report as JSON here")
    return p


def cmd_gen(args):
    cfg = GenConfig(classes=args.classes, train_per_class=args.train_per_class,
                    test_per_class=args.test_per_class, seq_len=args.seq_len,
                    input_dim=args.input_dim, motif_pool_size=args.motifs, lag=args.lag,
                    noise_sigma=args.noise, seed=_resolve_seed(args.seed),
                    lag_fill=args.lag_fill)
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _print_config("gen", {**asdict(cfg), "out": args.out})
    ds = generate_dataset(cfg)
    train_path, test_path = write_dataset(ds, args.out)
    print(f"format colstsm-ds-v1 k={ds.k} T={ds.T} n={ds.n} "
          f"classes={','.join(RELATIONS)}")
    print(f"wrote {len(ds.train)} records to {train_path}")
    print(f"wrote {len(ds.test)} records to {test_path}")
    return EXIT_OK


def cmd_train(args):
    cfg = TrainConfig(model=args.model, hidden=args.hidden, epochs=args.epochs,
                      learning_rate=args.lr, momentum=args.momentum, decay=args.decay,
                      batch_size=args.batch_size, bptt=args.bptt, seed=_resolve_seed(args.seed),
                      clip_norm=args.clip_norm, compat_tanh=args.compat_tanh)
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    history_path = args.history or f"{args.checkpoint}.history.csv"
    _print_config("train", {**cfg.to_dict(), "data": args.data, "checkpoint": args.checkpoint,
                            "history": history_path})
    ds = read_dataset(args.data)
    model, history, state = train(ds, cfg, return_state=True)
    save_checkpoint(model, args.checkpoint, state, cfg.to_dict())
    history.write_csv(history_path)
    last = history.records[-1] if history.records else None
    if last is not None:
        print(f"epochs {len(history)}  final loss {last.loss:.6f}  "
              f"train accuracy {last.train_accuracy:.4f}")
    print(f"checkpoint written to {args.checkpoint}")
    print(f"history written to {history_path}")
    return EXIT_OK


def _load_eval_inputs(args):
    model, _, _ = load_checkpoint(args.checkpoint)
    ds = read_dataset(args.data)
    pairs = ds.train if args.split == "train" else ds.test
    if ds.n != model.dims["n"] or ds.k != model.dims["k"]:
        raise ValueError(f"dataset (n={ds.n}, k={ds.k}) does not match the checkpoint "
                         f"(n={model.dims['n']}, k={model.dims['k']})")
    return model, pairs


def cmd_eval(args):
    _print_config("eval", {k: getattr(args, k) for k in ("checkpoint", "data", "split",
                                                         "average_steps", "csv")})
    model, pairs = _load_eval_inputs(args)
    metrics = evaluate(model, pairs, args.average_steps)
    names = list(RELATIONS) if metrics.confusion.shape[0] == len(RELATIONS) else None
    print(f"model {model.family}  pairs {metrics.total}")
    print(metrics.to_text(names))
    if args.csv:
        metrics.write_csv(args.csv)
        print(f"metrics written to {args.csv}")
    return EXIT_OK


def cmd_curve(args):
    _print_config("curve", {k: getattr(args, k) for k in ("checkpoint", "data", "split",
                                                          "average_steps", "csv")})
    model, pairs = _load_eval_inputs(args)
    curve = observation_curve(model, pairs, args.average_steps)
    print(curve.to_text())
    if args.csv:
        curve.write_csv(args.csv)
        print(f"curve written to {args.csv}")
    return EXIT_OK


def cmd_gradcheck(args):
    n, m, k, T = args.dims
    if args.eps <= 0 or args.tol <= 0:
        raise UsageError("--eps and --tol must be positive")
    seed = _resolve_seed(args.seed)
    _print_config("gradcheck", {"model": args.model, "n": n, "m": m, "k": k, "T": T,
                                "eps": args.eps, "tol": args.tol, "seed": seed,
                                "compat_tanh": args.compat_tanh})
    model, pair = bptt.random_tiny_case(args.model, n, m, k, T, seed, args.compat_tanh)
    report = bptt.grad_check(model, pair, args.eps, args.tol)
    report.meta.update(model=args.model, dims=[n, m, k, T], seed=seed)
    print(report.to_text())
    if args.json:
        Path(args.json).write_text(report.to_json() + "\n")
    return EXIT_OK if report.passed else EXIT_GRADCHECK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "curve": cmd_curve,
            "gradcheck": cmd_gradcheck}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"colstsm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DatasetFormatError, CheckpointError, ValueError) as exc:
        print(f"colstsm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
