"""Activation-count blendshape pruning.

A blendshape is kept only if its score goes strictly above the threshold
for strictly more than ``min_count`` frames of the training split. Both
comparisons are strict; boundary cases (score exactly at the threshold,
count exactly at the minimum) are excluded.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import BlendshapeDataset
from .errors import DataFormatError, EmptyDatasetError, MaskMismatchError


@dataclass(frozen=True)
class ActivationCounts:
    """Per-blendshape count of frames whose score exceeded the threshold."""

    counts: np.ndarray  # (52,) non-negative ints
    threshold: float
    dataset_size: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(counts < 0) or np.any(counts > self.dataset_size):
            raise DataFormatError("activation counts must lie in [0, dataset_size]")
        object.__setattr__(self, "counts", counts)


@dataclass(frozen=True)
class FeatureMask:
    """Ordered subset of blendshape indices surviving the pruning rule."""

    kept_indices: tuple[int, ...]
    source_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "kept_indices", tuple(int(i) for i in self.kept_indices))
        object.__setattr__(self, "source_names", tuple(self.source_names))
        n = len(self.source_names)
        if list(self.kept_indices) != sorted(set(self.kept_indices)):
            raise DataFormatError("mask indices must be unique and strictly increasing")
        if self.kept_indices and not (
            0 <= self.kept_indices[0] and self.kept_indices[-1] < n
        ):
            raise DataFormatError(f"mask indices must lie in [0, {n})")

    def __len__(self) -> int:
        return len(self.kept_indices)

    @property
    def kept_names(self) -> tuple[str, ...]:
        return tuple(self.source_names[i] for i in self.kept_indices)

    def apply(self, scores: np.ndarray) -> np.ndarray:
        """Gather the kept entries of one 52-score vector (or an (N, 52) matrix)."""
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape[-1] != len(self.source_names):
            raise MaskMismatchError(
                f"expected {len(self.source_names)} scores, got {scores.shape[-1]}"
            )
        return scores[..., list(self.kept_indices)]


def identity_mask(names) -> FeatureMask:
    """A mask keeping every blendshape, in order."""
    names = tuple(names)
    return FeatureMask(kept_indices=tuple(range(len(names))), source_names=names)


def count_activations(ds: BlendshapeDataset, threshold: float) -> ActivationCounts:
    """Count, per blendshape, the frames with score strictly above ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise DataFormatError(f"threshold must lie in (0, 1), got {threshold}")
    if len(ds) == 0:
        raise EmptyDatasetError("cannot count activations of an empty dataset")
    counts = (ds.scores_matrix() > threshold).sum(axis=0)
    return ActivationCounts(counts=counts, threshold=threshold, dataset_size=len(ds))


def select_features(ac: ActivationCounts, min_count: int, names=None) -> FeatureMask:
    """Keep the blendshapes activated strictly more than ``min_count`` times."""
    if min_count < 0:
        raise DataFormatError(f"min_count must be non-negative, got {min_count}")
    kept = tuple(int(j) for j in np.nonzero(ac.counts > min_count)[0])
    if names is None:
        from .names import ARKIT_BLENDSHAPE_NAMES

        names = ARKIT_BLENDSHAPE_NAMES
    return FeatureMask(kept_indices=kept, source_names=tuple(names))


def apply_mask(frame, mask: FeatureMask) -> np.ndarray:
    """Reduce one frame to the masked feature vector."""
    return mask.apply(frame.scores)


def save_mask(mask: FeatureMask, path: str | Path) -> None:
    """Write the kept blendshape names, one per line, for inspection."""
    Path(path).write_text("".join(f"{n}\n" for n in mask.kept_names), encoding="utf-8")


def load_mask(path: str | Path, source_names) -> FeatureMask:
    """Rebuild a mask from a kept-names file against a known name list."""
    source_names = tuple(source_names)
    position = {n: i for i, n in enumerate(source_names)}
    kept: list[int] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        name = line.strip()
        if not name:
            continue
        if name not in position:
            raise MaskMismatchError(f"{path}: line {lineno}: unknown blendshape {name!r}")
        kept.append(position[name])
    return FeatureMask(kept_indices=tuple(sorted(kept)), source_names=source_names)
