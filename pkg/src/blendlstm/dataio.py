"""Blendshape dataset model, CSV on-disk format, and label handling.

A dataset is an ordered list of labeled 52-score blendshape frames plus a
split tag. On disk each split is a UTF-8 CSV with header
``index,label7,label3,<name_1>,...,<name_52>`` named ``train.csv``,
``val.csv``, or ``test.csv`` under a dataset directory.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DataFormatError,
    EmptyDatasetError,
    InvalidLabelError,
    MissingClassError,
)
from .names import ARKIT_BLENDSHAPE_NAMES, NUM_BLENDSHAPES


class ClassLabel(enum.IntEnum):
    """The three target classes. Codes are part of the wire format."""

    HAPPY = 0
    UNKNOWN = 1
    SAD = 2


CLASS_NAMES = ("happy", "unknown", "sad")

SOURCE_LABELS = ("happy", "sad", "angry", "afraid", "surprise", "disgust", "neutral")

SPLITS = ("train", "validation", "test")

SPLIT_FILENAMES = {"train": "train.csv", "validation": "val.csv", "test": "test.csv"}


def remap_label(src: str) -> ClassLabel:
    """Map a 7-class source label to the 3-class target.

    happy -> HAPPY, sad -> SAD, every other emotion -> UNKNOWN.
    """
    if src not in SOURCE_LABELS:
        raise InvalidLabelError(f"unknown source label {src!r}")
    if src == "happy":
        return ClassLabel.HAPPY
    if src == "sad":
        return ClassLabel.SAD
    return ClassLabel.UNKNOWN


def one_hot(label: ClassLabel | int, num_classes: int) -> np.ndarray:
    """Return a length-``num_classes`` float64 vector with a 1 at ``label``."""
    code = int(label)
    if not 0 <= code < num_classes:
        raise InvalidLabelError(f"label code {code} out of range for {num_classes} classes")
    vec = np.zeros(num_classes, dtype=np.float64)
    vec[code] = 1.0
    return vec


@dataclass(frozen=True)
class BlendshapeFrame:
    """One face observation: 52 scores in [0, 1] and an optional tracking index."""

    scores: np.ndarray
    index: int | None = None

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.shape != (NUM_BLENDSHAPES,):
            raise DataFormatError(
                f"expected {NUM_BLENDSHAPES} blendshape scores, got shape {scores.shape}"
            )
        if np.any(scores < 0.0) or np.any(scores > 1.0):
            bad = int(np.argmax((scores < 0.0) | (scores > 1.0)))
            raise DataFormatError(
                f"blendshape score out of [0, 1] at position {bad}: {scores[bad]}"
            )
        if self.index is not None and self.index < 0:
            raise DataFormatError(f"frame index must be non-negative, got {self.index}")
        object.__setattr__(self, "scores", scores)


@dataclass(frozen=True)
class LabeledSample:
    """A frame with its 3-class label and, when known, the original 7-class label."""

    frame: BlendshapeFrame
    label3: ClassLabel
    label7: str | None = None

    def __post_init__(self):
        if self.label7 is not None and remap_label(self.label7) != self.label3:
            raise DataFormatError(
                f"label mismatch: {self.label7!r} remaps to "
                f"{remap_label(self.label7)!r}, not {self.label3!r}"
            )


@dataclass(frozen=True)
class BlendshapeDataset:
    """An immutable, split-tagged collection of labeled blendshape frames."""

    samples: tuple[LabeledSample, ...]
    split: str
    blendshape_names: tuple[str, ...] = ARKIT_BLENDSHAPE_NAMES

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "blendshape_names", tuple(self.blendshape_names))
        if self.split not in SPLITS:
            raise DataFormatError(f"unknown split {self.split!r}")
        if len(set(self.blendshape_names)) != len(self.blendshape_names):
            raise DataFormatError("blendshape names must be distinct")
        if len(self.blendshape_names) != NUM_BLENDSHAPES:
            raise DataFormatError(
                f"expected {NUM_BLENDSHAPES} blendshape names, got {len(self.blendshape_names)}"
            )
        seen: set[int] = set()
        for i, s in enumerate(self.samples):
            if s.frame.index is not None:
                if s.frame.index in seen:
                    raise DataFormatError(
                        f"duplicate frame index {s.frame.index} at sample {i}"
                    )
                seen.add(s.frame.index)

    def __len__(self) -> int:
        return len(self.samples)

    def scores_matrix(self) -> np.ndarray:
        """All score vectors stacked into an (N, 52) float64 matrix."""
        if not self.samples:
            return np.zeros((0, NUM_BLENDSHAPES), dtype=np.float64)
        return np.stack([s.frame.scores for s in self.samples])

    def labels(self) -> np.ndarray:
        """3-class label codes as an (N,) int array."""
        return np.array([int(s.label3) for s in self.samples], dtype=np.int64)


def subsample_per_class(
    ds: BlendshapeDataset, quota: dict[str, int | str], seed: int
) -> BlendshapeDataset:
    """Keep at most ``quota[label7]`` samples per source class, seeded-uniformly.

    A quota value of ``"all"`` keeps every sample of that class. Classes not
    named in the quota are kept in full. Sample order is preserved.
    """
    if ds.split != "train":
        raise DataFormatError(f"subsampling applies to the train split, got {ds.split!r}")
    for name in quota:
        if name not in SOURCE_LABELS:
            raise InvalidLabelError(f"unknown source label in quota: {name!r}")

    by_class: dict[str, list[int]] = {}
    for i, s in enumerate(ds.samples):
        if s.label7 is None:
            raise DataFormatError(
                f"sample {i} lacks a source label; subsample before augmentation"
            )
        by_class.setdefault(s.label7, []).append(i)

    for name in quota:
        if name not in by_class:
            raise MissingClassError(f"quota names class {name!r} absent from dataset")

    rng = np.random.default_rng(seed)
    kept: list[int] = []
    for name in SOURCE_LABELS:  # fixed class order keeps selection deterministic
        indices = by_class.get(name)
        if indices is None:
            continue
        limit = quota.get(name, "all")
        if limit == "all":
            kept.extend(indices)
        else:
            n = min(int(limit), len(indices))
            chosen = rng.choice(len(indices), size=n, replace=False)
            kept.extend(indices[j] for j in chosen)
    kept.sort()
    return BlendshapeDataset(
        samples=tuple(ds.samples[i] for i in kept),
        split=ds.split,
        blendshape_names=ds.blendshape_names,
    )


def _format_score(x: float) -> str:
    # repr round-trips float64 exactly
    return repr(float(x))


def save_dataset(ds: BlendshapeDataset, path: str | Path) -> None:
    """Write a dataset to the blendshape CSV format."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "label7", "label3", *ds.blendshape_names])
        for s in ds.samples:
            writer.writerow(
                [
                    "" if s.frame.index is None else str(s.frame.index),
                    "" if s.label7 is None else s.label7,
                    str(int(s.label3)),
                    *(_format_score(x) for x in s.frame.scores),
                ]
            )


def load_dataset(path: str | Path, split: str | None = None) -> BlendshapeDataset:
    """Load a dataset from the blendshape CSV format.

    ``split`` defaults to the split implied by the file name
    (train.csv / val.csv / test.csv).
    """
    path = Path(path)
    if split is None:
        by_name = {v: k for k, v in SPLIT_FILENAMES.items()}
        split = by_name.get(path.name)
        if split is None:
            raise DataFormatError(
                f"cannot infer split from file name {path.name!r}; pass split explicitly"
            )

    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if header[:3] != ["index", "label7", "label3"]:
            raise DataFormatError(
                f"{path}: malformed header, expected index,label7,label3,... "
                f"got {header[:3]}"
            )
        names = tuple(header[3:])
        if len(names) != NUM_BLENDSHAPES:
            raise DataFormatError(
                f"{path}: expected {NUM_BLENDSHAPES} score columns, got {len(names)}"
            )

        samples: list[LabeledSample] = []
        for rownum, row in enumerate(reader, start=2):
            if len(row) != 3 + NUM_BLENDSHAPES:
                raise DataFormatError(
                    f"{path}: row {rownum}: expected {3 + NUM_BLENDSHAPES} "
                    f"columns, got {len(row)}"
                )
            index_str, label7_str, label3_str = row[0], row[1], row[2]
            index = None
            if index_str != "":
                try:
                    index = int(index_str)
                except ValueError:
                    raise DataFormatError(
                        f"{path}: row {rownum}, column index: not an integer: {index_str!r}"
                    ) from None
            label7 = None
            if label7_str != "":
                if label7_str not in SOURCE_LABELS:
                    raise DataFormatError(
                        f"{path}: row {rownum}, column label7: unknown label {label7_str!r}"
                    )
                label7 = label7_str
            if label3_str not in ("0", "1", "2"):
                raise DataFormatError(
                    f"{path}: row {rownum}, column label3: expected 0/1/2, got {label3_str!r}"
                )
            label3 = ClassLabel(int(label3_str))

            scores = np.empty(NUM_BLENDSHAPES, dtype=np.float64)
            for j, cell in enumerate(row[3:]):
                try:
                    value = float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"{path}: row {rownum}, column {names[j]}: not a number: {cell!r}"
                    ) from None
                if not 0.0 <= value <= 1.0:
                    raise DataFormatError(
                        f"{path}: row {rownum}, column {names[j]}: "
                        f"score {value} outside [0, 1]"
                    )
                scores[j] = value
            try:
                samples.append(
                    LabeledSample(BlendshapeFrame(scores, index), label3, label7)
                )
            except DataFormatError as exc:
                raise DataFormatError(f"{path}: row {rownum}: {exc}") from None

    return BlendshapeDataset(samples=tuple(samples), split=split, blendshape_names=names)


def load_split(data_dir: str | Path, split: str) -> BlendshapeDataset:
    """Load one split from a dataset directory."""
    if split not in SPLITS:
        raise DataFormatError(f"unknown split {split!r}")
    return load_dataset(Path(data_dir) / SPLIT_FILENAMES[split], split=split)
