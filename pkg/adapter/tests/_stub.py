"""Deterministic stub landmark engine and synthetic test images.

The stub declares a face present when both the top and bottom halves of
the image show pixel variation (eyes up top, mouth down below). Blank
images fail in both halves; occluded ones fail in the covered half. The
52 scores it emits are a pure function of the pixel bytes, so extraction
is repeatable.
"""

import hashlib

import numpy as np

from fer2013_adapter.records import IMAGE_SIZE, RawImageRecord


class StubEngine:
    """Landmark engine standing in for the real detector in tests."""

    VARIANCE_FLOOR = 25.0

    def extract(self, pixels):
        pixels = np.asarray(pixels, dtype=np.float64)
        half = pixels.shape[0] // 2
        if pixels[:half].var() <= self.VARIANCE_FLOOR:
            return None
        if pixels[half:].var() <= self.VARIANCE_FLOOR:
            return None
        seed = int.from_bytes(
            hashlib.sha256(pixels.astype(np.uint8).tobytes()).digest()[:8], "little"
        )
        return np.random.default_rng(seed).uniform(0.0, 1.0, 52)


def clear_face(seed):
    """A synthetic frontal face: dark eye blobs and a mouth bar on noise."""
    rng = np.random.default_rng(seed)
    img = rng.integers(90, 130, (IMAGE_SIZE, IMAGE_SIZE))
    img[12:18, 10:18] = 10  # left eye
    img[12:18, 30:38] = 10  # right eye
    img[34:38, 14:34] = 220  # mouth
    return img.astype(np.uint8)


def blank_image(value=0):
    return np.full((IMAGE_SIZE, IMAGE_SIZE), value, dtype=np.uint8)


def occluded_face(seed):
    """Lower half covered: eyes visible, mouth hidden behind a flat block."""
    img = clear_face(seed)
    img[IMAGE_SIZE // 2 :, :] = 128
    return img


def make_record(pixels, emotion=3, usage="Training", index=0):
    return RawImageRecord(emotion=emotion, pixels=pixels, usage=usage, index=index)


def mini_set():
    """The 20-image curated set: 10 clear faces, 5 blanks, 5 occluded.

    Clear faces cycle through happy/sad/angry training, validation, and
    test rows; the junk images land in the training split.
    """
    specs = [
        (clear_face(1), 3, "Training"),
        (clear_face(2), 4, "Training"),
        (clear_face(3), 0, "Training"),
        (clear_face(4), 3, "Training"),
        (clear_face(5), 4, "Training"),
        (clear_face(6), 3, "PublicTest"),
        (clear_face(7), 4, "PublicTest"),
        (clear_face(8), 3, "PrivateTest"),
        (clear_face(9), 4, "PrivateTest"),
        (clear_face(10), 0, "PrivateTest"),
        (blank_image(0), 3, "Training"),
        (blank_image(50), 4, "Training"),
        (blank_image(128), 0, "Training"),
        (blank_image(200), 3, "Training"),
        (blank_image(255), 4, "Training"),
        (occluded_face(11), 3, "Training"),
        (occluded_face(12), 4, "Training"),
        (occluded_face(13), 0, "Training"),
        (occluded_face(14), 3, "Training"),
        (occluded_face(15), 4, "Training"),
    ]
    return [
        make_record(pixels, emotion, usage, index=i)
        for i, (pixels, emotion, usage) in enumerate(specs)
    ]
