"""Command line front end for training and inference.

Exit codes: 0 success, 1 usage error, 2 data or format error.
Progress (epoch losses, per-B-scan timing) goes to standard error.
"""
import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .exceptions import ArgumentError, FormatError, TrainingDiverged
from .models import DiscriminatorSpec, GeneratorSpec
from .train import TrainConfig, train, train_2d_baseline


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse parser that reports usage errors as exit code 1."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="octgan",
                     description="Conditional adversarial training on "
                                 "despeckled OCT pair exports.")
    parser.add_argument("--version", action="version",
                        version=f"octgan {__version__}")
    sub = parser.add_subparsers(dest="cmd", metavar="subcommand")

    p = sub.add_parser("train", help="fit a generator to a pairs manifest")
    p.add_argument("--manifest", required=True, metavar="JSON",
                   help="manifest.json from the pair exporter")
    p.add_argument("--out-dir", required=True, metavar="DIR")
    p.add_argument("--scale", type=int, default=4, metavar="S",
                   help="divide the reference extent and filter banks by S "
                        "(default 4)")
    p.add_argument("--epochs", type=int, default=None, metavar="N")
    p.add_argument("--lam", type=float, default=None, metavar="W",
                   help="L1 reconstruction weight")
    p.add_argument("--learning-rate", type=float, default=None, metavar="LR")
    p.add_argument("--batch-size", type=int, default=None, metavar="N")
    p.add_argument("--seed", type=int, default=None, metavar="N")
    p.add_argument("--stop-tolerance", type=float, default=None, metavar="T",
                   help="early-stop band around the 2 log 2 equilibrium")
    p.add_argument("--stop-patience", type=int, default=None, metavar="N",
                   help="epochs the loss must stay inside the band")
    p.add_argument("--baseline-2d", action="store_true",
                   help="train the single-frame control instead of the "
                        "full block model")

    p = sub.add_parser("infer", help="despeckle a volume with a checkpoint")
    p.add_argument("--checkpoint", required=True, metavar="PT")
    p.add_argument("--input", required=True, metavar="OCTV",
                   help="signed-domain volume")
    p.add_argument("--output", required=True, metavar="OCTV")
    p.add_argument("--noise", action=argparse.BooleanOptionalAction,
                   default=True,
                   help="sample the generator's dropout noise (default on)")
    p.add_argument("--seed", type=int, default=0, metavar="N",
                   help="noise seed")
    return parser


def _run_train(args) -> int:
    try:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
        n = int(manifest["n"])
    except OSError as exc:
        raise FormatError(f"cannot read manifest: {exc}") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"manifest is malformed: {exc}") from exc

    channels = 1 if args.baseline_2d else 2 * n + 1
    g_spec = GeneratorSpec(channels=channels, scale=args.scale)
    d_spec = DiscriminatorSpec(channels=channels + 1, scale=args.scale)

    overrides = {name: value for name, value in (
        ("lam", args.lam),
        ("learning_rate", args.learning_rate),
        ("epochs", args.epochs),
        ("batch_size", args.batch_size),
        ("seed", args.seed),
        ("stop_tolerance", args.stop_tolerance),
        ("stop_patience", args.stop_patience),
    ) if value is not None}
    cfg = TrainConfig(**overrides)

    start = time.perf_counter()
    runner = train_2d_baseline if args.baseline_2d else train
    checkpoint = runner(args.manifest, g_spec, d_spec, cfg, args.out_dir)
    rows = checkpoint["log"]
    print(f"trained {len(rows)} epochs "
          f"(final g {rows[-1]['g_loss']:.4f}, d {rows[-1]['d_loss']:.4f}) "
          f"in {time.perf_counter() - start:.1f} s "
          f"-> {Path(args.out_dir) / 'checkpoint.pt'}", file=sys.stderr)
    return 0


def _run_infer(args) -> int:
    import torch

    from .infer import infer_file, load_checkpoint

    torch.manual_seed(args.seed)
    checkpoint = load_checkpoint(args.checkpoint)
    start = time.perf_counter()
    out = infer_file(checkpoint, args.input, args.output, noise=args.noise)
    print(f"despeckled {out.shape[2]} B-scans "
          f"in {time.perf_counter() - start:.1f} s -> {args.output}",
          file=sys.stderr)
    return 0


_RUNNERS = {"train": _run_train, "infer": _run_infer}


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help and --version paths
        return 0 if exc.code in (0, None) else 1
    try:
        if args.cmd is None:
            print("usage error: a subcommand is required, one of "
                  + ", ".join(sorted(_RUNNERS)), file=sys.stderr)
            return 1
        return _RUNNERS[args.cmd](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ArgumentError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
