"""Training losses (MSE, categorical cross-entropy, focal) and evaluation
metrics (categorical accuracy, macro-F1, confusion matrix).

Predicted probabilities are clamped to [1e-12, 1] inside the log-based
losses so a confident wrong prediction yields a large finite loss instead
of an infinity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import CLASS_NAMES
from .errors import EmptyDatasetError, InvalidLabelError, ShapeError

PROB_FLOOR = 1e-12

LOSS_NAMES = ("mse", "cce", "focal")


@dataclass(frozen=True)
class FocalConfig:
    """Weighting (alpha) and focusing (gamma) parameters of the focal loss."""

    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        if self.alpha < 0 or self.gamma < 0:
            raise InvalidLabelError("focal alpha and gamma must be non-negative")


def _check_pair(y: np.ndarray, yhat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ShapeError(f"target shape {y.shape} != prediction shape {yhat.shape}")
    if y.size == 0:
        raise ShapeError("empty vectors")
    return y, yhat


def _check_one_hot(y: np.ndarray) -> int:
    if not (np.all((y == 0.0) | (y == 1.0)) and np.sum(y) == 1.0):
        raise InvalidLabelError(f"target is not one-hot: {y}")
    return int(np.argmax(y))


def mse(y, yhat) -> float:
    """Mean of squared differences."""
    y, yhat = _check_pair(y, yhat)
    return float(np.mean((y - yhat) ** 2))


def cce(y, yhat) -> float:
    """Categorical cross-entropy: -log of the true-class probability."""
    y, yhat = _check_pair(y, yhat)
    true = _check_one_hot(y)
    p = min(max(float(yhat[true]), PROB_FLOOR), 1.0)
    return float(-np.log(p))


def focal(y, yhat, cfg: FocalConfig = FocalConfig()) -> float:
    """Focal loss: alpha * (1 - p_true)^gamma * CCE.

    Returns a non-negative loss; p_true in the modulating factor is the
    predicted probability of the true class.
    """
    y, yhat = _check_pair(y, yhat)
    true = _check_one_hot(y)
    p = min(max(float(yhat[true]), PROB_FLOOR), 1.0)
    return float(cfg.alpha * (1.0 - p) ** cfg.gamma * -np.log(p))


def loss_value(name: str, y, yhat, focal_cfg: FocalConfig = FocalConfig()) -> float:
    """Evaluate the selected loss on one (target, prediction) pair."""
    if name == "mse":
        return mse(y, yhat)
    if name == "cce":
        return cce(y, yhat)
    if name == "focal":
        return focal(y, yhat, focal_cfg)
    raise InvalidLabelError(f"unknown loss {name!r}")


def loss_grad_probs(
    name: str, y: np.ndarray, probs: np.ndarray, focal_cfg: FocalConfig = FocalConfig()
) -> np.ndarray:
    """Gradient of the selected loss with respect to the probability vector.

    ``y`` may be a batch of one-hot rows with ``probs`` of matching shape;
    the gradient is taken per row (no batch averaging here).
    """
    y = np.asarray(y, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if y.shape != probs.shape:
        raise ShapeError(f"target shape {y.shape} != probs shape {probs.shape}")
    if name == "mse":
        n = y.shape[-1]
        return 2.0 * (probs - y) / n
    if name in ("cce", "focal"):
        p_true = np.sum(probs * y, axis=-1, keepdims=True)
        p_true = np.clip(p_true, PROB_FLOOR, 1.0)
        if name == "cce":
            d_ptrue = -1.0 / p_true
        else:
            a, g = focal_cfg.alpha, focal_cfg.gamma
            one_minus = 1.0 - p_true
            # d/dp [a * (1-p)^g * (-log p)]; the derivative of the modulating
            # factor vanishes identically when g == 0
            if g == 0.0:
                d_ptrue = -a / p_true
            else:
                d_ptrue = a * (
                    g * one_minus ** (g - 1.0) * np.log(p_true)
                    - one_minus**g / p_true
                )
        return y * d_ptrue
    raise InvalidLabelError(f"unknown loss {name!r}")


@dataclass(frozen=True)
class ConfusionMatrix:
    """3x3 count matrix; rows are ground truth, columns are predictions."""

    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int64)
        if cells.shape != (3, 3):
            raise ShapeError(f"confusion matrix must be 3x3, got {cells.shape}")
        if np.any(cells < 0):
            raise InvalidLabelError("confusion matrix cells must be non-negative")
        object.__setattr__(self, "cells", cells)

    @property
    def total(self) -> int:
        return int(self.cells.sum())


@dataclass(frozen=True)
class Metrics:
    """Evaluation summary for one model on one dataset."""

    loss: float
    cce: float
    accuracy: float
    macro_f1: float
    confusion: ConfusionMatrix

    def report(self) -> str:
        """Human-readable metrics report, as emitted by the CLI."""
        lines = [
            f"loss:      {self.loss:.6f}",
            f"cce:       {self.cce:.6f}",
            f"accuracy:  {self.accuracy:.4f}",
            f"macro_f1:  {self.macro_f1:.4f}",
            "confusion (rows = truth, cols = predicted):",
            "             " + "".join(f"{n:>9s}" for n in CLASS_NAMES),
        ]
        for t, name in enumerate(CLASS_NAMES):
            row = "".join(f"{int(self.confusion.cells[t, p]):9d}" for p in range(3))
            lines.append(f"  {name:>9s}  {row}")
        return "\n".join(lines)


def confusion(preds, truths) -> ConfusionMatrix:
    """Count matrix of (truth, prediction) pairs."""
    preds = list(preds)
    truths = list(truths)
    if len(preds) != len(truths):
        raise ShapeError(f"{len(preds)} predictions vs {len(truths)} truths")
    if not preds:
        raise EmptyDatasetError("no samples to tabulate")
    cells = np.zeros((3, 3), dtype=np.int64)
    for p, t in zip(preds, truths):
        cells[int(t), int(p)] += 1
    return ConfusionMatrix(cells)


def categorical_accuracy(cm: ConfusionMatrix) -> float:
    """Fraction of samples on the diagonal."""
    if cm.total == 0:
        raise EmptyDatasetError("empty confusion matrix")
    return float(np.trace(cm.cells) / cm.total)


def macro_f1(cm: ConfusionMatrix) -> float:
    """Unweighted mean of per-class F1 scores.

    A class with zero precision + recall (never predicted and never true,
    or always wrong) contributes 0 to the mean.
    """
    if cm.total == 0:
        raise EmptyDatasetError("empty confusion matrix")
    cells = cm.cells.astype(np.float64)
    f1s = []
    for k in range(3):
        col = cells[:, k].sum()
        row = cells[k, :].sum()
        precision = cells[k, k] / col if col > 0 else 0.0
        recall = cells[k, k] / row if row > 0 else 0.0
        if precision + recall == 0.0:
            f1s.append(0.0)
        else:
            f1s.append(2.0 * precision * recall / (precision + recall))
    return float(np.mean(f1s))
