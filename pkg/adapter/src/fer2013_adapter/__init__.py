"""FER2013 image data to blendshape-score CSV conversion."""

__version__ = "0.1.0"

from .augment import ROTATION_BOUND_DEGREES, ROTATION_FACTOR, augment, horizontal_flip, rotate
from .engine import EngineError, LandmarkEngine, MediaPipeEngine, upscale
from .names import ARKIT_BLENDSHAPE_NAMES, NUM_BLENDSHAPES
from .pipeline import (
    DEFAULT_TRAIN_QUOTA,
    ExtractionReport,
    extract_blendshapes,
    filter_detectable,
    subsample_training,
)
from .records import RawImageRecord, SourceParseError, parse_source

__all__ = [
    "ARKIT_BLENDSHAPE_NAMES",
    "DEFAULT_TRAIN_QUOTA",
    "EngineError",
    "ExtractionReport",
    "LandmarkEngine",
    "MediaPipeEngine",
    "NUM_BLENDSHAPES",
    "ROTATION_BOUND_DEGREES",
    "ROTATION_FACTOR",
    "RawImageRecord",
    "SourceParseError",
    "augment",
    "extract_blendshapes",
    "filter_detectable",
    "horizontal_flip",
    "parse_source",
    "rotate",
    "subsample_training",
    "upscale",
]
