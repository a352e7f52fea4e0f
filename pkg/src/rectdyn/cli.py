"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _params(path):
    from .physics import PhysicsParams

    return PhysicsParams.load(path) if path else PhysicsParams()


def cmd_generate(args) -> int:
    from .dataset import generate_dataset

    if args.count < 1:
        raise UsageError("--count must be >= 1")
    generate_dataset(args.seed, args.count, _params(args.params), args.out, workers=args.workers)
    print(f"wrote {args.count} samples to {args.out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    from .dataset import read_dataset
    from .raster import write_pgm, write_png

    data = read_dataset(args.input)
    if not 0 <= args.index < len(data):
        raise UsageError(f"--index {args.index} out of range for {len(data)} samples")
    t = data[args.index]
    for name, img in (("g", t.g), ("s", t.s), ("r", t.r)):
        write_pgm(img, f"{args.out_prefix}_{name}.pgm")
        if args.png:
            write_png(img, f"{args.out_prefix}_{name}.png")
    print(f"seed {data.seed}, {len(data)} samples; dumped index {args.index} to {args.out_prefix}_[gsr].pgm")
    return EXIT_OK


def cmd_train(args) -> int:
    from .model import NetworkConfig
    from .train import TrainConfig, train

    cfg = TrainConfig(
        lr=args.lr, batch_size=args.batch_size, epochs=args.epochs, train_path=args.train,
        val_path=args.val, seed=args.seed, checkpoint_out=args.out, log_out=args.log,
        checkpoint_every=args.checkpoint_every, crop=args.crop, grad_norm=args.grad_norm,
        resume=args.resume,
    )
    net, history = train(cfg, NetworkConfig(f=args.f, q=args.q, d=args.d))
    last = history.records[-1] if history.records else None
    if last is not None:
        print(f"epoch {last.epoch}: train {last.train:.6g}" + ("" if last.val is None else f", val {last.val:.6g}"))
    return EXIT_OK


def _load_net(path):
    from .model import load_checkpoint

    return load_checkpoint(path)


def cmd_eval(args) -> int:
    from .dataset import read_dataset
    from .report import evaluate, format_table

    net = _load_net(args.checkpoint)
    data = read_dataset(args.test)
    if args.crop:
        data = data.crop(args.crop)
    ev = evaluate(net, data, args.batch_size)
    if args.out:
        Path(args.out).write_text(format_table(ev.ranked))
    worst = ev.ranked[0]
    print(f"{len(data)} examples, mean per-pixel MSE {ev.mean:.6g}, worst index {worst.index} ({worst.loss:.6g})")
    return EXIT_OK


def cmd_report(args) -> int:
    from .dataset import read_dataset
    from .report import write_report

    net = _load_net(args.checkpoint)
    data = read_dataset(args.test)
    if args.crop:
        data = data.crop(args.crop)
    ev = write_report(net, data, args.out_dir, k=args.k, batch_size=args.batch_size)
    print(f"mean per-pixel MSE {ev.mean:.6g}; report in {args.out_dir}")
    return EXIT_OK


def cmd_dump_activations(args) -> int:
    from .dataset import read_dataset
    from .report import dump_activations

    net = _load_net(args.checkpoint)
    data = read_dataset(args.input)
    if not 0 <= args.index < len(data):
        raise UsageError(f"--index {args.index} out of range for {len(data)} samples")
    _, rows = dump_activations(net, data[args.index], args.out)
    print(f"wrote {sum(len(r) for r in rows)} maps in {len(rows)} rows to {args.out}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .report import plot_losses
    from .train import LossLog

    plot_losses(LossLog.read(args.log), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rectdyn", description="Pulled-rectangle simulator and residual predictor.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="simulate and write a dataset file")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--params", help="key=value physics parameter file")
    g.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("inspect", help="dump one sample's G, S, R images as PGM")
    i.add_argument("--in", dest="input", required=True)
    i.add_argument("--index", type=int, default=0)
    i.add_argument("--out-prefix", required=True)
    i.add_argument("--png", action="store_true", help="also write PNG files")
    i.set_defaults(func=cmd_inspect)

    t = sub.add_parser("train", help="train the network")
    t.add_argument("--train", required=True)
    t.add_argument("--val")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--log", help="loss log path")
    t.add_argument("--epochs", type=int, default=2000)
    t.add_argument("--lr", type=float, default=0.1)
    t.add_argument("--batch-size", type=int, default=128)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--f", type=int, default=5, help="filter size")
    t.add_argument("--q", type=int, default=16, help="internal channels")
    t.add_argument("--d", type=int, default=8, help="residual modules")
    t.add_argument("--crop", type=int, help="train on centered crops of this size")
    t.add_argument("--grad-norm", choices=("pixel", "batch"), default="pixel")
    t.add_argument("--checkpoint-every", type=int, default=50)
    t.add_argument("--resume", action="store_true")
    t.set_defaults(func=cmd_train)

    for name, func, help_ in (("eval", cmd_eval, "per-example losses of a checkpoint"),
                              ("report", cmd_report, "ranked table and worst/median composites")):
        e = sub.add_parser(name, help=help_)
        e.add_argument("--checkpoint", required=True)
        e.add_argument("--test", required=True)
        e.add_argument("--batch-size", type=int, default=128)
        e.add_argument("--crop", type=int)
        if name == "eval":
            e.add_argument("--out", help="write the ranked table here")
        else:
            e.add_argument("--out-dir", required=True)
            e.add_argument("--k", type=int, default=6)
        e.set_defaults(func=func)

    a = sub.add_parser("dump-activations", help="activation grid of one sample")
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--in", dest="input", required=True)
    a.add_argument("--index", type=int, default=0)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_dump_activations)

    pl = sub.add_parser("plot", help="line chart of a loss log")
    pl.add_argument("--log", required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    from .dataset import DatasetFormatError
    from .model import CheckpointError
    from .scene import PlacementError
    from .train import NumericError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        return args.func(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetFormatError, CheckpointError, PlacementError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
