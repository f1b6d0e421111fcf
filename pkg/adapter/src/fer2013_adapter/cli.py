"""Command-line entry point: FER2013 CSV in, blendshape split CSVs out.

Exit codes: 0 success, 1 usage error, 2 source-data error, 3 engine or
I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .engine import EngineError, MediaPipeEngine
from .pipeline import DEFAULT_TRAIN_QUOTA, extract_blendshapes
from .records import SourceParseError, parse_source


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fer2013-extract",
        description="Convert a FER2013-style image CSV into blendshape split CSVs.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("source", help="path to the FER2013 CSV (emotion,pixels,Usage)")
    parser.add_argument("out_dir", help="directory for train.csv, val.csv, test.csv")
    parser.add_argument(
        "--task-model",
        required=True,
        help="path to the face-landmarker task model file",
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--copies-per-image",
        type=int,
        default=2,
        help="augmented copies added per training image (default 2)",
    )
    parser.add_argument(
        "--no-subsample",
        action="store_true",
        help="skip the per-class training caps",
    )
    parser.add_argument(
        "--report",
        help="also write the extraction report to this file",
    )
    return parser


def run(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if args.copies_per_image < 0:
        parser.print_usage(sys.stderr)
        print("fer2013-extract: --copies-per-image must be >= 0", file=sys.stderr)
        return 1

    try:
        engine = MediaPipeEngine(args.task_model)
    except EngineError as exc:
        print(f"fer2013-extract: {exc}", file=sys.stderr)
        return 3

    try:
        records = parse_source(args.source)
    except OSError as exc:
        print(f"fer2013-extract: {exc}", file=sys.stderr)
        return 3
    except SourceParseError as exc:
        print(f"fer2013-extract: {exc}", file=sys.stderr)
        return 2

    quota = {} if args.no_subsample else DEFAULT_TRAIN_QUOTA
    try:
        report = extract_blendshapes(
            records,
            engine,
            args.out_dir,
            seed=args.seed,
            quota=quota,
            copies_per_image=args.copies_per_image,
        )
    except OSError as exc:
        print(f"fer2013-extract: {exc}", file=sys.stderr)
        return 3

    text = report.render()
    print(text)
    if args.report:
        try:
            with open(args.report, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        except OSError as exc:
            print(f"fer2013-extract: {exc}", file=sys.stderr)
            return 3
    return 0


def main() -> None:
    raise SystemExit(run())
