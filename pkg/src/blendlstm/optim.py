"""AdamW training: global gradient-norm clipping, the optimizer step, the
epoch loop with checkpointing and early stopping, evaluation, and a
random-search tuner.

Training samples are length-1 sequences (one frame per sample) starting
from a zero hidden state; streaming statefulness lives in the infer
module.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np

from . import nn
from .dataio import BlendshapeDataset, one_hot
from .errors import ConfigError, EmptyDatasetError, MaskMismatchError
from .lossmetrics import (
    FocalConfig,
    LOSS_NAMES,
    Metrics,
    categorical_accuracy,
    confusion,
    loss_value,
    macro_f1,
)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer, loss, and schedule knobs. Defaults follow the reference
    training setup where one exists; weight decay and the early-stopping
    patience have no stated value and are this package's defaults."""

    learning_rate: float = 1.09e-06
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    weight_decay: float = 0.004
    amsgrad: bool = True
    global_clipnorm: float = 1.0
    batch_size: int = 128
    max_epochs: int = 5000
    loss: str = "cce"
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    early_stop_patience: int = 50
    checkpoint_min_interval: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.loss not in LOSS_NAMES:
            raise ConfigError(f"loss must be one of {LOSS_NAMES}, got {self.loss!r}")
        if self.early_stop_patience < 1 or self.checkpoint_min_interval < 1:
            raise ConfigError("patience and checkpoint interval must be >= 1")

    @property
    def focal_cfg(self) -> FocalConfig:
        return FocalConfig(alpha=self.focal_alpha, gamma=self.focal_gamma)

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass
class AdamWState:
    """Per-parameter first/second moments, amsgrad running max, step count."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    v_max: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def init(cls, params: dict[str, np.ndarray]) -> "AdamWState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            v_max={k: np.zeros_like(p) for k, p in params.items()},
        )


def global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    """Euclidean norm over all gradient entries jointly."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    return math.sqrt(total)


def global_clipnorm(
    grads: dict[str, np.ndarray], max_norm: float
) -> dict[str, np.ndarray]:
    """Scale all gradients jointly so their combined norm is at most ``max_norm``."""
    if max_norm <= 0:
        raise ConfigError(f"max_norm must be positive, got {max_norm}")
    norm = global_grad_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {k: np.asarray(g, dtype=np.float64) * scale for k, g in grads.items()}


def _is_bias(key: str) -> bool:
    return key.rsplit(".", 1)[-1] == "b"


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamWState,
    cfg: TrainConfig,
) -> tuple[dict[str, np.ndarray], AdamWState]:
    """One decoupled-weight-decay Adam step, updating parameters in place.

    Weight decay is applied to weight matrices but not biases. With
    amsgrad the denominator uses the running maximum of the
    bias-corrected second moment.
    """
    if set(params) != set(grads):
        raise ConfigError("parameter and gradient keys differ")
    state.t += 1
    t = state.t
    b1, b2 = cfg.beta1, cfg.beta2
    for key, p in params.items():
        g = np.asarray(grads[key], dtype=np.float64)
        if g.shape != p.shape:
            raise ConfigError(f"gradient shape mismatch for {key}")
        m = state.m[key]
        v = state.v[key]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        if cfg.amsgrad:
            np.maximum(state.v_max[key], v_hat, out=state.v_max[key])
            v_hat = state.v_max[key]
        update = cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
        if cfg.weight_decay != 0.0 and not _is_bias(key):
            update = update + cfg.learning_rate * cfg.weight_decay * p
        p -= update
    return params, state


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val: Metrics


@dataclass
class CheckpointRecord:
    epoch: int
    path: str
    val: Metrics


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    checkpoints: list[CheckpointRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    final_model_path: str = ""

    @property
    def best_checkpoint(self) -> CheckpointRecord | None:
        return self.checkpoints[-1] if self.checkpoints else None

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "val_acc", "val_f1"])
            for rec in self.epochs:
                writer.writerow(
                    [
                        rec.epoch,
                        repr(rec.train_loss),
                        repr(rec.val.loss),
                        repr(rec.val.accuracy),
                        repr(rec.val.macro_f1),
                    ]
                )


def _masked_inputs(model: nn.Model, ds: BlendshapeDataset) -> tuple[np.ndarray, np.ndarray]:
    """Dataset as (N, 1, k) masked inputs and (N, 3) one-hot targets."""
    if len(ds) == 0:
        raise EmptyDatasetError(f"{ds.split} split is empty")
    if tuple(ds.blendshape_names) != tuple(model.mask.source_names):
        raise MaskMismatchError(
            "dataset blendshape names do not match the model's stored mask"
        )
    x = model.mask.apply(ds.scores_matrix())[:, None, :]
    y = np.stack([one_hot(code, 3) for code in ds.labels()])
    return x, y


def evaluate(
    model: nn.Model,
    ds: BlendshapeDataset,
    loss: str = "cce",
    focal_cfg: FocalConfig = FocalConfig(),
) -> Metrics:
    """Argmax predictions over a dataset, with loss and cce means."""
    x, y = _masked_inputs(model, ds)
    probs, _, _ = nn.forward(model, x)
    preds = np.argmax(probs, axis=-1)
    cm = confusion(preds, ds.labels())
    losses = [loss_value(loss, yi, pi, focal_cfg) for yi, pi in zip(y, probs)]
    cces = (
        losses
        if loss == "cce"
        else [loss_value("cce", yi, pi) for yi, pi in zip(y, probs)]
    )
    return Metrics(
        loss=float(np.mean(losses)),
        cce=float(np.mean(cces)),
        accuracy=categorical_accuracy(cm),
        macro_f1=macro_f1(cm),
        confusion=cm,
    )


def _metrics_to_jsonable(m: Metrics) -> dict:
    return {
        "loss": m.loss,
        "cce": m.cce,
        "accuracy": m.accuracy,
        "macro_f1": m.macro_f1,
        "confusion": m.confusion.cells.tolist(),
    }


def train(
    model: nn.Model,
    train_ds: BlendshapeDataset,
    val_ds: BlendshapeDataset,
    cfg: TrainConfig,
    out_dir: str | Path,
) -> TrainHistory:
    """Train in place with AdamW, early stopping, and rate-limited
    validation-loss checkpointing.

    Checkpoints are saved on validation-loss improvement, at most once per
    ``checkpoint_min_interval`` epochs (the first improvement is always
    saved). The final weights land in ``out_dir/last.model`` and the epoch
    log in ``out_dir/history.csv``.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc

    x_train, y_train = _masked_inputs(model, train_ds)
    _masked_inputs(model, val_ds)  # fail fast on mask/name mismatch
    n = x_train.shape[0]

    params = model.param_dict()
    state = AdamWState.init(params)
    rng = np.random.default_rng(cfg.seed)
    history = TrainHistory()
    epochs_since_improvement = 0
    last_ckpt_epoch: int | None = None
    digest = cfg.digest()

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for epoch in range(1, cfg.max_epochs + 1):
            perm = rng.permutation(n)
            loss_sum = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = perm[start : start + cfg.batch_size]
                xb, yb = x_train[idx], y_train[idx]
                _, cache, _ = nn.forward(model, xb)
                loss_sum += nn.batch_loss(model, cache, yb, cfg.loss, cfg.focal_cfg) * len(idx)
                grads = nn.backward(model, cache, yb, cfg.loss, cfg.focal_cfg)
                grads = global_clipnorm(grads, cfg.global_clipnorm)
                adamw_step(params, grads, state, cfg)

            train_loss = loss_sum / n
            val = evaluate(model, val_ds, cfg.loss, cfg.focal_cfg)
            history.epochs.append(EpochRecord(epoch, train_loss, val))

            improved = val.loss < history.best_val_loss
            if improved:
                history.best_val_loss = val.loss
                history.best_epoch = epoch
                epochs_since_improvement = 0
                due = (
                    last_ckpt_epoch is None
                    or epoch - last_ckpt_epoch >= cfg.checkpoint_min_interval
                )
                if due:
                    ckpt_path = out_dir / f"ckpt_epoch{epoch}.model"
                    model.metadata = {
                        **model.metadata,
                        "training_config_digest": digest,
                        "checkpoint_epoch": epoch,
                        "validation_metrics": _metrics_to_jsonable(val),
                    }
                    nn.save_model(model, ckpt_path)
                    history.checkpoints.append(
                        CheckpointRecord(epoch, str(ckpt_path), val)
                    )
                    last_ckpt_epoch = epoch
            else:
                epochs_since_improvement += 1
                if epochs_since_improvement >= cfg.early_stop_patience:
                    break

    final_path = out_dir / "last.model"
    model.metadata = {
        **model.metadata,
        "training_config_digest": digest,
        "stopped_epoch": history.epochs[-1].epoch if history.epochs else 0,
    }
    nn.save_model(model, final_path)
    history.final_model_path = str(final_path)
    history.write_csv(out_dir / "history.csv")
    return history


# ---------------------------------------------------------------------------
# random search
# ---------------------------------------------------------------------------

_TUNABLE_FIELDS = {
    "learning_rate",
    "weight_decay",
    "batch_size",
    "loss",
    "focal_alpha",
    "focal_gamma",
    "global_clipnorm",
    "amsgrad",
}


def _sample_value(spec, rng: np.random.Generator):
    if isinstance(spec, list):
        if not spec:
            raise ConfigError("empty choice list in search space")
        return spec[int(rng.integers(len(spec)))]
    if isinstance(spec, dict) and "low" in spec and "high" in spec:
        low, high = float(spec["low"]), float(spec["high"])
        if spec.get("log"):
            return float(np.exp(rng.uniform(np.log(low), np.log(high))))
        return float(rng.uniform(low, high))
    raise ConfigError(f"search-space entry must be a list or low/high range: {spec!r}")


@dataclass
class TrialResult:
    trial: int
    layer_units: tuple[int, ...]
    config: TrainConfig
    val_loss: float
    val_accuracy: float


def random_search(
    space: dict,
    trials: int,
    budget_epochs: int,
    train_ds: BlendshapeDataset,
    val_ds: BlendshapeDataset,
    seed: int,
    mask=None,
    base_config: TrainConfig | None = None,
    out_dir: str | Path | None = None,
) -> tuple[TrialResult, list[TrialResult]]:
    """Sample ``trials`` configurations uniformly, train each for
    ``budget_epochs``, and rank by best validation loss.

    ``space`` maps TrainConfig field names to a list of choices or a
    ``{"low", "high", "log"}`` range; the key ``layer_units`` holds a list
    of candidate architectures.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    if not space:
        raise ConfigError("search space is empty")
    unknown = set(space) - _TUNABLE_FIELDS - {"layer_units"}
    if unknown:
        raise ConfigError(f"unknown search-space keys: {sorted(unknown)}")

    import tempfile

    base = base_config or TrainConfig()
    if mask is None:
        from .featsel import identity_mask

        mask = identity_mask(train_ds.blendshape_names)
    rng = np.random.default_rng(seed)
    results: list[TrialResult] = []
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(out_dir) if out_dir is not None else Path(tmp)
        for trial in range(trials):
            if "layer_units" in space:
                units = tuple(_sample_value(space["layer_units"], rng))
            else:
                units = (64, 64, 32, 16)
            overrides = {
                k: _sample_value(v, rng) for k, v in space.items() if k != "layer_units"
            }
            cfg = replace(
                base, **overrides, max_epochs=budget_epochs, seed=seed + trial
            )
            model = nn.init_model(units, len(mask), seed=seed + trial, mask=mask)
            trial_dir = root / f"trial{trial}"
            history = train(model, train_ds, val_ds, cfg, trial_dir)
            val_loss = history.best_val_loss
            best_acc = max((r.val.accuracy for r in history.epochs), default=0.0)
            if math.isnan(val_loss):
                val_loss = math.inf
            results.append(TrialResult(trial, units, cfg, val_loss, best_acc))

    leaderboard = sorted(results, key=lambda r: (r.val_loss, r.trial))
    return leaderboard[0], leaderboard
