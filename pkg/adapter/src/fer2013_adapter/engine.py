"""Face-landmark engines: detect a face and return its 52 blendshape scores.

An engine takes a (48, 48) uint8 grayscale image and returns either a
length-52 float array of scores in [0, 1], or None when no face is
detected. The MediaPipe engine upscales to 192x192 (bicubic) first
because landmark detection is unreliable at 48x48.
"""

from __future__ import annotations

from pathlib import Path
from typing import Protocol

import numpy as np
from PIL import Image

from .names import ARKIT_BLENDSHAPE_NAMES, NUM_BLENDSHAPES

UPSCALED_SIZE = 192


class EngineError(Exception):
    """The landmark engine could not be initialized."""


class LandmarkEngine(Protocol):
    def extract(self, pixels: np.ndarray) -> np.ndarray | None:
        """Return 52 blendshape scores for the image, or None if no face."""
        ...


def upscale(pixels: np.ndarray, size: int = UPSCALED_SIZE) -> np.ndarray:
    """Bicubic upscale of a grayscale image to (size, size) uint8."""
    img = Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="L")
    out = np.asarray(img.resize((size, size), Image.BICUBIC))
    return np.clip(out, 0, 255).astype(np.uint8)


class MediaPipeEngine:
    """Blendshape extraction via the MediaPipe face-landmarker task model.

    The task model is an external artifact; pass its path explicitly.
    Requires the optional ``mediapipe`` dependency.
    """

    def __init__(self, task_model_path: str | Path):
        try:
            import mediapipe as mp
            from mediapipe.tasks import python as mp_python
            from mediapipe.tasks.python import vision as mp_vision
        except ImportError as exc:
            raise EngineError(
                "mediapipe is not installed; install the [mediapipe] extra"
            ) from exc
        task_model_path = Path(task_model_path)
        if not task_model_path.is_file():
            raise EngineError(f"task model not found: {task_model_path}")
        self._mp = mp
        options = mp_vision.FaceLandmarkerOptions(
            base_options=mp_python.BaseOptions(model_asset_path=str(task_model_path)),
            output_face_blendshapes=True,
            num_faces=1,
        )
        self._landmarker = mp_vision.FaceLandmarker.create_from_options(options)

    def extract(self, pixels: np.ndarray) -> np.ndarray | None:
        gray = upscale(pixels)
        rgb = np.repeat(gray[:, :, None], 3, axis=2)
        image = self._mp.Image(image_format=self._mp.ImageFormat.SRGB, data=rgb)
        result = self._landmarker.detect(image)
        if not result.face_blendshapes:
            return None
        by_name = {c.category_name: c.score for c in result.face_blendshapes[0]}
        scores = np.array(
            [by_name.get(name, 0.0) for name in ARKIT_BLENDSHAPE_NAMES],
            dtype=np.float64,
        )
        if scores.shape != (NUM_BLENDSHAPES,):
            return None
        return np.clip(scores, 0.0, 1.0)
