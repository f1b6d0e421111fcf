"""Parsing of the FER2013 source CSV into image records.

The source file has columns ``emotion,pixels,Usage``: a 0-6 class code, a
space-separated list of 2304 grayscale values (48x48, row-major), and the
split tag (Training / PublicTest / PrivateTest). Every row gets a
sequential index that follows the image through filtering, augmentation,
and blendshape extraction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_SIZE = 48
PIXELS_PER_IMAGE = IMAGE_SIZE * IMAGE_SIZE

# FER2013 emotion codes, using "afraid" for the dataset's fear class
EMOTION_NAMES = {
    0: "angry",
    1: "disgust",
    2: "afraid",
    3: "happy",
    4: "sad",
    5: "surprise",
    6: "neutral",
}

USAGE_TO_SPLIT = {
    "Training": "train",
    "PublicTest": "validation",
    "PrivateTest": "test",
}


class SourceParseError(Exception):
    """The FER2013 CSV is malformed."""


@dataclass(frozen=True)
class RawImageRecord:
    emotion: int
    pixels: np.ndarray  # (48, 48) uint8
    usage: str
    index: int | None  # None marks an augmented copy with no source row

    @property
    def emotion_name(self) -> str:
        return EMOTION_NAMES[self.emotion]

    @property
    def split(self) -> str:
        return USAGE_TO_SPLIT[self.usage]


def parse_source(path: str | Path) -> list[RawImageRecord]:
    """Read the FER2013 CSV, assigning sequential indices."""
    path = Path(path)
    records: list[RawImageRecord] = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"emotion", "pixels", "Usage"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise SourceParseError(
                f"{path}: expected columns emotion,pixels,Usage, got {reader.fieldnames}"
            )
        for rownum, row in enumerate(reader, start=2):
            try:
                emotion = int(row["emotion"])
            except (TypeError, ValueError):
                raise SourceParseError(
                    f"{path}: row {rownum}: bad emotion code {row['emotion']!r}"
                ) from None
            if emotion not in EMOTION_NAMES:
                raise SourceParseError(
                    f"{path}: row {rownum}: emotion code {emotion} outside 0-6"
                )
            usage = row["Usage"]
            if usage not in USAGE_TO_SPLIT:
                raise SourceParseError(
                    f"{path}: row {rownum}: unknown usage {usage!r}"
                )
            values = row["pixels"].split()
            if len(values) != PIXELS_PER_IMAGE:
                raise SourceParseError(
                    f"{path}: row {rownum}: expected {PIXELS_PER_IMAGE} pixels, "
                    f"got {len(values)}"
                )
            try:
                pixels = np.array(values, dtype=np.int64)
            except ValueError:
                raise SourceParseError(
                    f"{path}: row {rownum}: non-numeric pixel value"
                ) from None
            if pixels.min() < 0 or pixels.max() > 255:
                raise SourceParseError(
                    f"{path}: row {rownum}: pixel value outside 0-255"
                )
            records.append(
                RawImageRecord(
                    emotion=emotion,
                    pixels=pixels.astype(np.uint8).reshape(IMAGE_SIZE, IMAGE_SIZE),
                    usage=usage,
                    index=len(records),
                )
            )
    return records
