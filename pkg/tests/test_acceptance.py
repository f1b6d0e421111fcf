"""Acceptance suite: every release criterion, one test each, at its stated
tolerance. Run with ``pytest tests/test_acceptance.py -s`` to see one
pass/fail line per criterion.
"""

import math
import os

import numpy as np
import pytest

from blendlstm import nn, optim
from blendlstm.dataio import BlendshapeDataset, load_split, one_hot
from blendlstm.featsel import count_activations, identity_mask, select_features
from blendlstm.lossmetrics import (
    ConfusionMatrix,
    FocalConfig,
    categorical_accuracy,
    cce,
    focal,
    macro_f1,
    mse,
)
from blendlstm.names import ARKIT_BLENDSHAPE_NAMES
from blendlstm.optim import AdamWState, TrainConfig, adamw_step, global_clipnorm, global_grad_norm

from _oracles import (
    adamw_scalar_trace,
    finite_difference_grads,
    max_relative_grad_error,
)
from _datasets import separable_dataset
from test_featsel import brute_force_counts, dataset_from_matrix
from test_lossmetrics import REFERENCE_CM, naive_cce, naive_mse


def _report(name, detail=""):
    suffix = f" ({detail})" if detail else ""
    print(f"[PASS] {name}{suffix}")


def test_metric_fixture():
    """The reference confusion matrix reproduces both published metrics."""
    cm = ConfusionMatrix(REFERENCE_CM)
    acc = categorical_accuracy(cm)
    f1 = macro_f1(cm)
    assert abs(acc - 0.7199) <= 0.0001
    assert abs(f1 - 0.6298) <= 0.0005
    _report("metric fixture", f"accuracy={acc:.4f}, macro_f1={f1:.4f}")


def test_gradient_correctness():
    """Analytic BPTT gradients match central finite differences (<1e-4 rel)."""
    rng = np.random.default_rng(2024)
    worst = 0.0
    n_models = 21
    for trial in range(n_models):
        loss = ("mse", "cce", "focal")[trial % 3]
        n_layers = int(rng.integers(2, 5))
        units = [int(rng.integers(3, 9)) for _ in range(n_layers)]
        in_dim = int(rng.integers(3, 9))
        seq_len = int(rng.integers(1, 4))
        model = nn.init_model(units, in_dim, seed=int(rng.integers(1 << 30)))
        x = rng.uniform(0, 1, (1, seq_len, in_dim))
        y = np.eye(3)[rng.integers(0, 3, 1)]
        _, cache, _ = nn.forward(model, x)
        analytic = nn.backward(model, cache, y, loss)
        numeric = finite_difference_grads(model, x, y, loss, step=1e-5)
        worst = max(worst, max_relative_grad_error(analytic, numeric))
    assert worst < 1e-4
    _report("gradient correctness", f"{n_models} models, max rel err {worst:.2e}")


def test_loss_identities():
    rng = np.random.default_rng(7)
    cfg = FocalConfig(alpha=1.0, gamma=0.0)
    worst_focal = 0.0
    for _ in range(1000):
        p = rng.dirichlet(np.ones(3))
        y = np.eye(3)[rng.integers(0, 3)]
        worst_focal = max(worst_focal, abs(focal(y, p, cfg) - cce(y, p)))
    assert worst_focal < 1e-12

    worst_mse = worst_cce = 0.0
    for _ in range(200):
        y = np.eye(3)[rng.integers(0, 3)]
        p = rng.dirichlet(np.ones(3))
        worst_mse = max(worst_mse, abs(mse(y, p) - naive_mse(y, p)))
        worst_cce = max(worst_cce, abs(cce(y, p) - naive_cce(y, p)))
    assert worst_mse < 1e-15
    assert worst_cce < 1e-15
    _report("loss identities", f"focal-cce gap {worst_focal:.1e}")


def test_optimizer_oracle():
    for amsgrad in (False, True):
        for weight_decay in (0.0, 0.05):
            cfg = TrainConfig(
                learning_rate=0.01,
                beta1=0.9,
                beta2=0.999,
                epsilon=1e-8,
                weight_decay=weight_decay,
                amsgrad=amsgrad,
            )
            grads = [0.5, -1.2, 0.3]
            expected = adamw_scalar_trace(
                1.0, grads, 0.01, 0.9, 0.999, 1e-8, weight_decay, amsgrad
            )
            params = {"w": np.array([1.0])}
            state = AdamWState.init(params)
            for g, want in zip(grads, expected):
                adamw_step(params, {"w": np.array([g])}, state, cfg)
                assert abs(params["w"][0] - want) < 1e-10

    rng = np.random.default_rng(11)
    for _ in range(20):
        grads = {"a": rng.normal(0, 3, (5, 4)), "b": rng.normal(0, 3, 9)}
        norm = global_grad_norm(grads)
        clipped = global_clipnorm(grads, 1.0)
        assert abs(global_grad_norm(clipped) - min(norm, 1.0)) < 1e-12
        flat = np.concatenate([grads["a"].ravel(), grads["b"].ravel()])
        flat_c = np.concatenate([clipped["a"].ravel(), clipped["b"].ravel()])
        cos = np.dot(flat, flat_c) / (np.linalg.norm(flat) * np.linalg.norm(flat_c))
        assert abs(cos - 1.0) < 1e-12
    _report("optimizer oracle")


def test_feature_selection_oracle():
    rng = np.random.default_rng(99)
    for trial in range(50):
        scores = rng.uniform(0, 1, (200, 52))
        # force the boundary cases the strict rule must exclude
        scores[:, 0] = 0.4  # exactly at the threshold: never counted
        scores[:101, 1] = 0.5  # strictly above for exactly 101 frames: kept
        scores[101:, 1] = 0.1
        scores[:100, 2] = 0.5  # exactly 100 frames: dropped
        scores[100:, 2] = 0.1
        ds = dataset_from_matrix(scores)
        mask = select_features(count_activations(ds, 0.4), 100)
        oracle_counts = brute_force_counts(scores, 0.4)
        oracle_kept = tuple(j for j in range(52) if oracle_counts[j] > 100)
        assert mask.kept_indices == oracle_kept
        assert 0 not in mask.kept_indices
        assert 1 in mask.kept_indices
        assert 2 not in mask.kept_indices
    _report("feature-selection oracle", "50 datasets, strict boundaries")


def test_end_to_end_overfit(tmp_path):
    ds = separable_dataset(10, seed=5)
    val = BlendshapeDataset(ds.samples, "validation")
    cfg = TrainConfig(
        learning_rate=1e-2, max_epochs=500, early_stop_patience=500, seed=11
    )
    mask = identity_mask(ARKIT_BLENDSHAPE_NAMES)
    outputs = []
    reached = None
    for name in ("run1", "run2"):
        model = nn.init_model([64, 64, 32, 16], 52, seed=11, mask=mask)
        history = optim.train(model, ds, val, cfg, tmp_path / name)
        reached = next(
            (r.epoch for r in history.epochs if r.val.accuracy == 1.0), None
        )
        assert reached is not None and reached <= 500
        outputs.append(
            (
                (tmp_path / name / "last.model").read_bytes(),
                (tmp_path / name / "history.csv").read_bytes(),
            )
        )
    assert outputs[0] == outputs[1]
    _report("end-to-end overfit", f"100% train accuracy at epoch {reached}, reruns bit-identical")


def test_serialization(tmp_path):
    model = nn.init_model([6, 4], 9, seed=21)
    path = tmp_path / "m.model"
    nn.save_model(model, path)
    loaded = nn.load_model(path)
    for (ka, pa), (kb, pb) in zip(
        model.param_dict().items(), loaded.param_dict().items()
    ):
        assert ka == kb and pa.tobytes() == pb.tobytes()

    ds = separable_dataset(5, seed=6)
    val = BlendshapeDataset(ds.samples, "validation")
    mask = identity_mask(ARKIT_BLENDSHAPE_NAMES)
    trained = nn.init_model([8, 6], 52, seed=22, mask=mask)
    cfg = TrainConfig(learning_rate=1e-2, max_epochs=6, checkpoint_min_interval=1, seed=23)
    history = optim.train(trained, ds, val, cfg, tmp_path / "t")
    assert history.checkpoints
    for rec in history.checkpoints:
        ckpt = nn.load_model(rec.path)
        again = optim.evaluate(ckpt, val, cfg.loss, cfg.focal_cfg)
        recorded = ckpt.metadata["validation_metrics"]
        assert again.loss == recorded["loss"]
        assert again.accuracy == recorded["accuracy"]
        assert again.macro_f1 == recorded["macro_f1"]
    _report("serialization", f"{len(history.checkpoints)} checkpoints re-verified")


def test_statefulness_identity():
    rng = np.random.default_rng(31)
    model = nn.init_model([6, 5], 7, seed=41)
    seq = rng.uniform(0, 1, (6, 7))
    whole, _, _ = nn.forward(model, seq)
    _, _, mid = nn.forward(model, seq[:3])
    chained, _, _ = nn.forward(model, seq[3:], state=mid)
    assert np.max(np.abs(whole - chained)) < 1e-12
    _report("statefulness identity", f"gap {np.max(np.abs(whole - chained)):.1e}")


FER2013_DIR = os.environ.get("BLENDLSTM_FER2013_DIR")


@pytest.mark.skipif(
    not FER2013_DIR,
    reason="long-run check needs an extracted FER2013 blendshape dataset "
    "(set BLENDLSTM_FER2013_DIR)",
)
def test_long_run_fer2013_mask_and_accuracy():
    """Dataset-dependent long-run mode: 27-of-52 mask and >= 0.70 accuracy."""
    train_ds = load_split(FER2013_DIR, "train")
    mask = select_features(
        count_activations(train_ds, 0.4), 100, names=train_ds.blendshape_names
    )
    assert len(mask) == 27

    model_path = os.environ.get("BLENDLSTM_LONG_RUN_MODEL")
    if not model_path:
        pytest.skip("mask size verified; set BLENDLSTM_LONG_RUN_MODEL to check accuracy")
    model = nn.load_model(model_path)
    test_ds = load_split(FER2013_DIR, "test")
    metrics = optim.evaluate(model, test_ds)
    assert metrics.accuracy >= 0.70
    _report("long-run FER2013", f"mask 27/52, accuracy {metrics.accuracy:.4f}")
