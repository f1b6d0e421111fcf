"""Single-frame prediction and stateful streaming classification.

By default every frame is classified exactly as during training: a
length-1 sequence from a zero hidden state. Carrying the LSTM state
across frames and exponentially smoothing the output probabilities are
opt-in experiment flags.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .dataio import BlendshapeFrame, ClassLabel
from .errors import ConfigError, DataFormatError, MaskMismatchError


def predict(model: nn.Model, frame: BlendshapeFrame) -> tuple[ClassLabel, np.ndarray]:
    """Stateless classification of one frame. Ties go to the lowest class code."""
    features = model.mask.apply(frame.scores)
    probs, _, _ = nn.forward(model, features[None, :])
    return ClassLabel(int(np.argmax(probs))), probs


@dataclass
class StreamSession:
    """Single-consumer streaming classifier over one immutable model.

    ``stateful`` carries the LSTM hidden state across frames; ``smoothing``
    (a coefficient beta in [0, 1)) blends each raw probability vector with
    the previous smoothed one.
    """

    model: nn.Model
    stateful: bool = False
    smoothing: float | None = None
    hidden: nn.HiddenState | None = None
    smoothed_probs: np.ndarray | None = None
    frames_seen: int = 0

    def __post_init__(self):
        if self.smoothing is not None and not 0.0 <= self.smoothing < 1.0:
            raise ConfigError(f"smoothing beta must lie in [0, 1), got {self.smoothing}")

    def step(self, frame: BlendshapeFrame) -> tuple[ClassLabel, np.ndarray, np.ndarray]:
        """Classify the next frame; returns (label, probs, raw_probs)."""
        features = self.model.mask.apply(frame.scores)
        state = self.hidden if self.stateful else None
        raw, _, new_state = nn.forward(self.model, features[None, :], state)
        if self.stateful:
            self.hidden = new_state

        if self.smoothing is None or self.smoothed_probs is None:
            probs = raw.copy()
        else:
            beta = self.smoothing
            probs = beta * self.smoothed_probs + (1.0 - beta) * raw
            probs = probs / probs.sum()
        if self.smoothing is not None:
            self.smoothed_probs = probs
        self.frames_seen += 1
        return ClassLabel(int(np.argmax(probs))), probs, raw

    def reset(self) -> "StreamSession":
        """Zero the hidden state and smoothing accumulator."""
        self.hidden = None
        self.smoothed_probs = None
        self.frames_seen = 0
        return self


def parse_frame_line(line: str, names) -> BlendshapeFrame:
    """Parse one stream-input line into a frame.

    Accepts either 52 comma-separated decimals in canonical order or a
    JSON object mapping blendshape names to scores (missing names score 0).
    """
    names = tuple(names)
    text = line.strip()
    if not text:
        raise DataFormatError("empty frame line")
    if text.startswith("{"):
        try:
            mapping = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"bad JSON frame: {exc}") from None
        if not isinstance(mapping, dict):
            raise DataFormatError("JSON frame must be an object of name: score")
        unknown = set(mapping) - set(names)
        if unknown:
            raise MaskMismatchError(f"unknown blendshape names: {sorted(unknown)}")
        scores = np.array([float(mapping.get(n, 0.0)) for n in names])
    else:
        parts = text.split(",")
        if len(parts) != len(names):
            raise DataFormatError(
                f"expected {len(names)} comma-separated scores, got {len(parts)}"
            )
        try:
            scores = np.array([float(p) for p in parts])
        except ValueError as exc:
            raise DataFormatError(f"bad score value: {exc}") from None
    return BlendshapeFrame(scores=scores)
