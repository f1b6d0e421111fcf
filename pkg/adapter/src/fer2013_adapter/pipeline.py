"""The extraction pipeline: filter, subsample, augment, extract, write.

Output files use the blendshape CSV wire format: header
``index,label7,label3,<name_1>,...,<name_52>``, one row per image, scores
written with ``repr`` so float64 values round-trip exactly. Splits are
written as train.csv, val.csv, and test.csv under an output directory.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import augment
from .engine import LandmarkEngine
from .names import ARKIT_BLENDSHAPE_NAMES
from .records import RawImageRecord

log = logging.getLogger(__name__)

SPLIT_FILENAMES = {"train": "train.csv", "validation": "val.csv", "test": "test.csv"}

# per-class training caps; "all" keeps every image of that class
DEFAULT_TRAIN_QUOTA: dict[str, int | str] = {
    "happy": 4000,
    "sad": 4000,
    "angry": 1500,
    "afraid": 1500,
    "surprise": 1500,
    "neutral": 1500,
    "disgust": "all",
}

LABEL3_CODES = {"happy": 0, "sad": 2}  # everything else maps to 1 (unknown)


def label3_code(emotion_name: str) -> int:
    return LABEL3_CODES.get(emotion_name, 1)


@dataclass
class SplitClassStats:
    total: int = 0
    undetectable: int = 0
    extracted: int = 0
    augmented: int = 0


@dataclass
class ExtractionReport:
    """Per split and class counts for one pipeline run."""

    stats: dict[tuple[str, str], SplitClassStats] = field(default_factory=dict)

    def at(self, split: str, emotion_name: str) -> SplitClassStats:
        return self.stats.setdefault((split, emotion_name), SplitClassStats())

    def validate(self) -> None:
        for (split, name), s in self.stats.items():
            if s.extracted != s.total - s.undetectable:
                raise ValueError(
                    f"{split}/{name}: extracted {s.extracted} != "
                    f"total {s.total} - undetectable {s.undetectable}"
                )

    def render(self) -> str:
        lines = ["split      class     total  undetect  extracted  augmented"]
        for (split, name), s in sorted(self.stats.items()):
            lines.append(
                f"{split:<10} {name:<9} {s.total:>5} {s.undetectable:>9} "
                f"{s.extracted:>10} {s.augmented:>10}"
            )
        return "\n".join(lines)


def filter_detectable(
    records: list[RawImageRecord], engine: LandmarkEngine
) -> tuple[list[RawImageRecord], ExtractionReport]:
    """Drop images in which the engine finds no face; count the drops."""
    report = ExtractionReport()
    kept: list[RawImageRecord] = []
    for r in records:
        stats = report.at(r.split, r.emotion_name)
        stats.total += 1
        if engine.extract(r.pixels) is None:
            stats.undetectable += 1
        else:
            stats.extracted += 1
            kept.append(r)
    report.validate()
    return kept, report


def subsample_training(
    records: list[RawImageRecord],
    quota: dict[str, int | str],
    seed: int,
) -> list[RawImageRecord]:
    """Cap per-class training counts, keeping a seeded uniform choice.

    Non-training records pass through untouched; record order is preserved.
    """
    rng = np.random.default_rng(seed)
    by_class: dict[str, list[int]] = {}
    for i, r in enumerate(records):
        if r.split == "train":
            by_class.setdefault(r.emotion_name, []).append(i)
    drop: set[int] = set()
    for name in sorted(by_class):
        limit = quota.get(name, "all")
        if limit == "all":
            continue
        indices = by_class[name]
        if len(indices) > int(limit):
            chosen = rng.choice(len(indices), size=int(limit), replace=False)
            keep = {indices[j] for j in chosen}
            drop.update(i for i in indices if i not in keep)
    return [r for i, r in enumerate(records) if i not in drop]


def _format_score(x: float) -> str:
    # repr round-trips float64 exactly
    return repr(float(x))


def write_split(records_scores, split: str, out_dir: Path) -> int:
    """Write one split CSV; records_scores is (record, scores) pairs."""
    path = out_dir / SPLIT_FILENAMES[split]
    n = 0
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "label7", "label3", *ARKIT_BLENDSHAPE_NAMES])
        for r, scores in records_scores:
            writer.writerow(
                [
                    "" if r.index is None else str(r.index),
                    r.emotion_name,
                    str(label3_code(r.emotion_name)),
                    *(_format_score(x) for x in scores),
                ]
            )
            n += 1
    return n


def extract_blendshapes(
    records: list[RawImageRecord],
    engine: LandmarkEngine,
    out_dir: str | Path,
    seed: int = 0,
    quota: dict[str, int | str] | None = None,
    copies_per_image: int = 2,
) -> ExtractionReport:
    """Run the full pipeline over pre-parsed records and write split CSVs.

    Filters undetectable images, subsamples the training split to the
    per-class quota, augments the surviving training images, extracts 52
    blendshape scores per image, and writes train.csv / val.csv /
    test.csv. Returns the per split and class report.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if quota is None:
        quota = DEFAULT_TRAIN_QUOTA

    kept, report = filter_detectable(records, engine)
    kept = subsample_training(kept, quota, seed)

    train = [r for r in kept if r.split == "train"]
    augmented = augment(train, seed, copies_per_image)
    for r in augmented[len(train):]:
        report.at("train", r.emotion_name).augmented += 1

    by_split: dict[str, list[RawImageRecord]] = {
        "train": augmented,
        "validation": [r for r in kept if r.split == "validation"],
        "test": [r for r in kept if r.split == "test"],
    }
    for split, split_records in by_split.items():
        rows = []
        for r in split_records:
            scores = engine.extract(r.pixels)
            if scores is None:
                # augmentation can push a borderline face below detectability
                log.warning("split %s: face lost after transform, skipping", split)
                if r.index is None:
                    report.at(split, r.emotion_name).augmented -= 1
                continue
            rows.append((r, scores))
        write_split(rows, split, out_dir)
    return report
