"""Training-split image augmentation: horizontal flips and small rotations.

Rotation angles are uniform in [-36, +36] degrees; the bound comes from a
rotation factor of 0.2, i.e. 0.2 x 180 degrees. Augmented copies are
appended after the originals and drop the source index, since an index
identifies one source image.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from PIL import Image

from .records import RawImageRecord

ROTATION_FACTOR = 0.2
ROTATION_BOUND_DEGREES = ROTATION_FACTOR * 180.0  # 36.0


def horizontal_flip(pixels: np.ndarray) -> np.ndarray:
    return np.fliplr(pixels).copy()


def rotate(pixels: np.ndarray, degrees: float) -> np.ndarray:
    img = Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="L")
    out = img.rotate(degrees, resample=Image.BICUBIC)
    return np.asarray(out, dtype=np.uint8)


def augment(
    records: list[RawImageRecord], seed: int, copies_per_image: int = 2
) -> list[RawImageRecord]:
    """Append flipped and rotated copies of each training record.

    ``copies_per_image`` counts added copies: the default 2 is one flip
    and one rotation. Further copies are rotations with fresh angles,
    alternating between the original and the flipped image as the base.
    Originals are always kept unchanged; copies carry no source index.
    """
    for r in records:
        if r.split != "train":
            raise ValueError(f"augmentation applies to the train split, got {r.split!r}")
    rng = np.random.default_rng(seed)
    out = list(records)
    for r in records:
        flipped = horizontal_flip(r.pixels)
        for k in range(copies_per_image):
            if k == 0:
                pixels = flipped
            else:
                angle = rng.uniform(-ROTATION_BOUND_DEGREES, ROTATION_BOUND_DEGREES)
                base = r.pixels if k % 2 == 1 else flipped
                pixels = rotate(base, angle)
            out.append(replace(r, pixels=pixels, index=None))
    return out
