"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 I/O or model-file
error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, dataio, featsel, infer, nn, optim
from .errors import BlendlstmError, ModelFormatError
from .lossmetrics import (
    ConfusionMatrix,
    Metrics,
    categorical_accuracy,
    confusion,
    macro_f1,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_IO = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="blendlstm", description=__doc__)
    parser.add_argument(
        "--version",
        action="version",
        version=f"blendlstm {__version__} (model format {nn.MODEL_FORMAT_VERSION})",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("select-features", help="compute and export a blendshape mask")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--split", default="train", choices=dataio.SPLITS)
    p.add_argument("--threshold", type=float, default=0.4)
    p.add_argument("--min-count", type=int, default=100)
    p.add_argument("--out", required=True, help="mask output file")

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--config", help="JSON training config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mask", help="mask file; computed from the train split if absent")
    p.add_argument("--layer-units", help="comma-separated LSTM widths, e.g. 64,64,32,16")
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int, dest="max_epochs")
    p.add_argument("--loss", choices=("mse", "cce", "focal"))
    p.add_argument("--seed", type=int)
    p.add_argument("--threshold", type=float, default=0.4)
    p.add_argument("--min-count", type=int, default=100)

    p = sub.add_parser("evaluate", help="evaluate a model or a prediction file")
    p.add_argument("--model", help="model file")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--split", default="test", choices=dataio.SPLITS)
    p.add_argument(
        "--predictions",
        help="CSV of predicted,truth class codes to score instead of a model",
    )

    p = sub.add_parser("predict", help="classify frames from a file")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="one frame per line")

    p = sub.add_parser("stream", help="classify frames from standard input")
    p.add_argument("--model", required=True)
    p.add_argument("--stateful", action="store_true")
    p.add_argument("--smooth", type=float, metavar="BETA")

    p = sub.add_parser("tune", help="random hyperparameter search")
    p.add_argument("--data", required=True)
    p.add_argument("--space", required=True, help="JSON search-space file")
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--budget", type=int, required=True, help="epochs per trial")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the leaderboard JSON here")

    p = sub.add_parser("inspect", help="print model metadata")
    p.add_argument("--model", required=True)

    return parser


def _load_train_config(args) -> tuple[optim.TrainConfig, list[int]]:
    values: dict = {}
    layer_units = [64, 64, 32, 16]
    if args.config:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise BlendlstmError(f"{args.config}: config must be a JSON object")
        if "layer_units" in raw:
            layer_units = [int(u) for u in raw.pop("layer_units")]
        known = {f.name for f in dataclasses.fields(optim.TrainConfig)}
        unknown = set(raw) - known
        if unknown:
            raise BlendlstmError(f"{args.config}: unknown config keys {sorted(unknown)}")
        values.update(raw)
    # explicit flags override config-file values
    for key in ("learning_rate", "batch_size", "max_epochs", "loss", "seed"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if args.layer_units:
        layer_units = [int(u) for u in args.layer_units.split(",")]
    return optim.TrainConfig(**values), layer_units


def _cmd_select_features(args) -> int:
    ds = dataio.load_split(args.data, args.split)
    counts = featsel.count_activations(ds, args.threshold)
    mask = featsel.select_features(counts, args.min_count, names=ds.blendshape_names)
    featsel.save_mask(mask, args.out)
    print(f"kept {len(mask)} of {len(ds.blendshape_names)} blendshapes -> {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg, layer_units = _load_train_config(args)
    train_ds = dataio.load_split(args.data, "train")
    val_ds = dataio.load_split(args.data, "validation")
    if args.mask:
        mask = featsel.load_mask(args.mask, train_ds.blendshape_names)
    else:
        counts = featsel.count_activations(train_ds, args.threshold)
        mask = featsel.select_features(
            counts, args.min_count, names=train_ds.blendshape_names
        )
    model = nn.init_model(
        layer_units,
        len(mask),
        seed=cfg.seed,
        mask=mask,
        metadata=nn.make_metadata(cfg.digest()),
    )
    history = optim.train(model, train_ds, val_ds, cfg, args.out)
    best = history.best_checkpoint
    print(f"trained {history.epochs[-1].epoch} epochs; final model {history.final_model_path}")
    if best is not None:
        print(
            f"best checkpoint epoch {best.epoch}: val loss {best.val.loss:.6f}, "
            f"acc {best.val.accuracy:.4f} ({best.path})"
        )
    return EXIT_OK


def _read_prediction_file(path: str) -> tuple[list[int], list[int]]:
    preds: list[int] = []
    truths: list[int] = []
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), 1
    ):
        text = line.strip()
        if not text or text.startswith("#") or text.lower().startswith("pred"):
            continue
        parts = text.split(",")
        if len(parts) != 2:
            raise BlendlstmError(f"{path}: line {lineno}: expected pred,truth")
        try:
            p, t = int(parts[0]), int(parts[1])
        except ValueError:
            raise BlendlstmError(f"{path}: line {lineno}: non-integer class code") from None
        if not (0 <= p <= 2 and 0 <= t <= 2):
            raise BlendlstmError(f"{path}: line {lineno}: class code outside 0..2")
        preds.append(p)
        truths.append(t)
    return preds, truths


def _cmd_evaluate(args) -> int:
    if args.predictions:
        preds, truths = _read_prediction_file(args.predictions)
        cm = confusion(preds, truths)
        metrics = Metrics(
            loss=float("nan"),
            cce=float("nan"),
            accuracy=categorical_accuracy(cm),
            macro_f1=macro_f1(cm),
            confusion=cm,
        )
        print(f"accuracy:  {metrics.accuracy:.4f}")
        print(f"macro_f1:  {metrics.macro_f1:.4f}")
        print("confusion (rows = truth, cols = predicted):")
        for row in cm.cells:
            print("  " + " ".join(f"{int(v):6d}" for v in row))
        return EXIT_OK
    if not args.model or not args.data:
        raise _UsageError("evaluate needs --model and --data (or --predictions)")
    model = nn.load_model(args.model)
    ds = dataio.load_split(args.data, args.split)
    metrics = optim.evaluate(model, ds)
    print(metrics.report())
    return EXIT_OK


def _cmd_predict(args) -> int:
    model = nn.load_model(args.model)
    names = model.mask.source_names
    for lineno, line in enumerate(
        Path(args.input).read_text(encoding="utf-8").splitlines(), 1
    ):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        frame = infer.parse_frame_line(line, names)
        label, probs = infer.predict(model, frame)
        print(
            f"{lineno} {model.class_names[label]} {int(label)} "
            + " ".join(f"{p:.6f}" for p in probs)
        )
    return EXIT_OK


def _cmd_stream(args, stdin=None) -> int:
    model = nn.load_model(args.model)
    session = infer.StreamSession(model, stateful=args.stateful, smoothing=args.smooth)
    names = model.mask.source_names
    stdin = stdin if stdin is not None else sys.stdin
    counter = 0
    for line in stdin:
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        frame = infer.parse_frame_line(line, names)
        label, probs, _ = session.step(frame)
        print(
            f"{counter} {model.class_names[label]} {int(label)} "
            + " ".join(f"{p:.6f}" for p in probs),
            flush=True,
        )
        counter += 1
    return EXIT_OK


def _cmd_tune(args) -> int:
    space = json.loads(Path(args.space).read_text(encoding="utf-8"))
    train_ds = dataio.load_split(args.data, "train")
    val_ds = dataio.load_split(args.data, "validation")
    best, leaderboard = optim.random_search(
        space, args.trials, args.budget, train_ds, val_ds, seed=args.seed
    )
    rows = [
        {
            "trial": r.trial,
            "layer_units": list(r.layer_units),
            "val_loss": r.val_loss,
            "val_accuracy": r.val_accuracy,
            "config": dataclasses.asdict(r.config),
        }
        for r in leaderboard
    ]
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=2), encoding="utf-8")
    print(
        f"best trial {best.trial}: layers {list(best.layer_units)}, "
        f"lr {best.config.learning_rate:.3g}, loss {best.config.loss}, "
        f"val loss {best.val_loss:.6f}"
    )
    return EXIT_OK


def _cmd_inspect(args) -> int:
    model = nn.load_model(args.model)
    print(f"format version: {nn.MODEL_FORMAT_VERSION}")
    print(f"classes:        {', '.join(model.class_names)}")
    print(f"layer units:    {list(model.layer_units)}")
    print(f"input features: {model.in_dim} of {len(model.mask.source_names)}")
    print(f"parameters:     {model.num_params()}")
    for key, value in sorted(model.metadata.items()):
        print(f"metadata.{key}: {value}")
    print("kept blendshapes:")
    for name in model.mask.kept_names:
        print(f"  {name}")
    return EXIT_OK


_COMMANDS = {
    "select-features": _cmd_select_features,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "stream": _cmd_stream,
    "tune": _cmd_tune,
    "inspect": _cmd_inspect,
}


def run(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --version / --help
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelFormatError as exc:
        print(f"model file error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BlendlstmError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except json.JSONDecodeError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
