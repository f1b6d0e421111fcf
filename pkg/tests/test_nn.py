import numpy as np
import pytest

from blendlstm import nn
from blendlstm.errors import (
    ConfigError,
    ModelChecksumError,
    ModelTruncatedError,
    ModelVersionError,
    ShapeError,
)
from blendlstm.nn import (
    DenseParams,
    LstmLayerParams,
    forward,
    init_model,
    load_model,
    lstm_cell_forward,
    save_model,
    softmax,
    zero_state,
)

from _oracles import (
    finite_difference_grads,
    max_relative_grad_error,
    reference_forward,
)


def zero_model(layer_units=(4,), in_dim=3):
    m = init_model(layer_units, in_dim, seed=0)
    for p in m.param_dict().values():
        p[...] = 0.0
    return m


class TestInit:
    def test_deterministic(self):
        a = init_model([8, 4], 27, seed=123)
        b = init_model([8, 4], 27, seed=123)
        for (ka, pa), (kb, pb) in zip(a.param_dict().items(), b.param_dict().items()):
            assert ka == kb
            assert pa.tobytes() == pb.tobytes()

    def test_forget_bias_is_one(self):
        m = init_model([5, 3], 10, seed=1)
        for layer in m.layers:
            u = layer.units
            assert np.all(layer.b[u : 2 * u] == 1.0)
            assert np.all(layer.b[:u] == 0.0)
            assert np.all(layer.b[2 * u :] == 0.0)

    def test_glorot_bound(self):
        m = init_model([64], 27, seed=2)
        bound = np.sqrt(6.0 / (27 + 64))
        assert abs(bound - 0.2567) < 1e-4
        assert np.all(np.abs(m.layers[0].W) <= bound)

    def test_recurrent_orthogonal(self):
        m = init_model([6], 4, seed=3)
        u = 6
        for k in range(4):
            q = m.layers[0].U[k * u : (k + 1) * u]
            assert np.allclose(q @ q.T, np.eye(u), atol=1e-10)

    def test_zero_units_rejected(self):
        with pytest.raises(ConfigError):
            init_model([0], 5, seed=0)
        with pytest.raises(ConfigError):
            init_model([], 5, seed=0)


class TestCellForward:
    def test_all_zero_parameters(self):
        u, d = 4, 3
        p = LstmLayerParams(np.zeros((4 * u, d)), np.zeros((4 * u, u)), np.zeros(4 * u))
        h, c, (i, f, g, o) = lstm_cell_forward(
            np.ones((1, d)), np.zeros((1, u)), np.zeros((1, u)), p
        )
        assert np.all(h == 0) and np.all(c == 0)
        assert np.all(i == 0.5) and np.all(f == 0.5) and np.all(o == 0.5)
        assert np.all(g == 0)

    def test_one_unit_all_ones(self):
        # i = f = o = sigmoid(1), g = tanh(1); hand evaluation of the cell
        p = LstmLayerParams(np.ones((4, 1)), np.ones((4, 1)), np.zeros(4))
        h, c, _ = lstm_cell_forward([[1.0]], [[0.0]], [[0.0]], p)
        sig1, tanh1 = 1 / (1 + np.exp(-1)), np.tanh(1.0)
        assert c[0, 0] == pytest.approx(sig1 * tanh1, abs=1e-12)
        assert c[0, 0] == pytest.approx(0.5568, abs=1e-4)
        assert h[0, 0] == pytest.approx(sig1 * np.tanh(sig1 * tanh1), abs=1e-12)
        assert h[0, 0] == pytest.approx(0.3696, abs=1e-4)

    def test_nothing_to_remember(self):
        u, d = 3, 2
        p = LstmLayerParams(
            np.zeros((4 * u, d)),
            np.zeros((4 * u, u)),
            np.concatenate([np.zeros(u), np.full(u, 50.0), np.zeros(2 * u)]),
        )
        h, c, _ = lstm_cell_forward(
            np.full((1, d), 7.0), np.zeros((1, u)), np.zeros((1, u)), p
        )
        assert np.allclose(h, 0.0, atol=1e-12)

    def test_shape_error(self):
        p = LstmLayerParams(np.zeros((8, 3)), np.zeros((8, 2)), np.zeros(8))
        with pytest.raises(ShapeError):
            lstm_cell_forward(np.zeros((1, 4)), np.zeros((1, 2)), np.zeros((1, 2)), p)


class TestForward:
    def test_zero_model_uniform(self):
        m = zero_model()
        probs, _, _ = forward(m, np.random.default_rng(0).uniform(0, 1, (2, 3)))
        assert np.allclose(probs, 1 / 3, atol=1e-15)

    def test_probs_sum_to_one(self):
        rng = np.random.default_rng(1)
        m = init_model([5, 4], 6, seed=4)
        probs, _, _ = forward(m, rng.uniform(0, 1, (7, 3, 6)))
        assert np.allclose(probs.sum(axis=-1), 1.0, atol=1e-9)
        assert np.all(probs > 0) and np.all(probs < 1)

    def test_length_one_equals_cell_composition(self):
        rng = np.random.default_rng(2)
        m = init_model([4, 3], 5, seed=5)
        x = rng.uniform(0, 1, 5)
        probs, _, _ = forward(m, x[None, :])
        inp = x[None, :]
        for layer in m.layers:
            u = layer.units
            inp, _, _ = lstm_cell_forward(
                inp, np.zeros((1, u)), np.zeros((1, u)), layer
            )
        logits = inp @ m.head.W.T + m.head.b
        assert np.allclose(probs, softmax(logits)[0], atol=1e-15)

    def test_matches_reference_implementation(self):
        rng = np.random.default_rng(3)
        m = init_model([4, 4], 6, seed=6)
        seq = rng.uniform(0, 1, (3, 6))
        probs, _, _ = forward(m, seq)
        assert np.allclose(probs, reference_forward(m, seq), atol=1e-12)

    def test_wrong_feature_dim(self):
        m = init_model([4], 5, seed=7)
        with pytest.raises(ShapeError):
            forward(m, np.zeros((2, 6)))

    def test_empty_sequence(self):
        m = init_model([4], 5, seed=8)
        with pytest.raises(ShapeError):
            forward(m, np.zeros((0, 5)))

    def test_hidden_magnitude_bounded(self):
        rng = np.random.default_rng(4)
        m = init_model([6], 5, seed=9)
        for p in m.param_dict().values():
            p *= 10.0  # extreme weights still cannot push |h| past 1
        _, cache, _ = forward(m, rng.uniform(0, 1, (8, 5)))
        assert np.all(np.abs(cache.h[0]) <= 1.0)

    def test_softmax_shift_invariance(self):
        rng = np.random.default_rng(5)
        logits = rng.normal(0, 3, (10, 3))
        assert np.allclose(softmax(logits), softmax(logits + 17.0), atol=1e-12)


class TestStatefulness:
    def test_chained_forward_equals_whole_sequence(self):
        rng = np.random.default_rng(6)
        m = init_model([5, 4], 6, seed=10)
        seq = rng.uniform(0, 1, (6, 6))
        whole, _, _ = forward(m, seq)
        _, _, mid = forward(m, seq[:3])
        chained, _, _ = forward(m, seq[3:], state=mid)
        assert np.allclose(whole, chained, atol=1e-12)

    def test_state_round_trip_matches_streaming(self):
        rng = np.random.default_rng(7)
        m = init_model([4], 3, seed=11)
        seq = rng.uniform(0, 1, (5, 3))
        whole, _, _ = forward(m, seq)
        state = zero_state(m)
        for t in range(5):
            probs, _, state = forward(m, seq[t : t + 1], state=state)
        assert np.allclose(whole, probs, atol=1e-12)


class TestBackward:
    @pytest.mark.parametrize("loss", ["mse", "cce", "focal"])
    def test_gradients_match_finite_differences(self, loss):
        rng = np.random.default_rng(8)
        m = init_model([4, 4], 5, seed=12)
        x = rng.uniform(0, 1, (2, 3, 5))
        y = np.eye(3)[rng.integers(0, 3, 2)]
        _, cache, _ = forward(m, x)
        analytic = nn.backward(m, cache, y, loss)
        numeric = finite_difference_grads(m, x, y, loss)
        assert max_relative_grad_error(analytic, numeric) < 1e-4

    def test_zero_gradient_at_perfect_mse(self):
        m = zero_model((4,), 3)
        # zero model outputs exactly uniform; a uniform "target" has zero grad
        _, cache, _ = forward(m, np.ones((1, 3)))
        grads = nn.backward(m, cache, np.full((1, 3), 1 / 3), "mse")
        for g in grads.values():
            assert np.allclose(g, 0.0, atol=1e-15)

    def test_gradients_linear_in_loss_scale(self):
        # focal with alpha doubled doubles every gradient entry
        rng = np.random.default_rng(9)
        from blendlstm.lossmetrics import FocalConfig

        m = init_model([4], 5, seed=13)
        x = rng.uniform(0, 1, (1, 2, 5))
        y = np.eye(3)[[1]]
        _, cache, _ = forward(m, x)
        g1 = nn.backward(m, cache, y, "focal", FocalConfig(alpha=0.25, gamma=2.0))
        g2 = nn.backward(m, cache, y, "focal", FocalConfig(alpha=0.5, gamma=2.0))
        for key in g1:
            assert np.allclose(2.0 * g1[key], g2[key], atol=1e-14)

    def test_cache_model_mismatch(self):
        m = init_model([4], 5, seed=14)
        other = init_model([6, 6], 5, seed=15)
        _, cache, _ = forward(m, np.zeros((1, 5)))
        with pytest.raises(ConfigError):
            nn.backward(other, cache, np.eye(3)[[0]], "cce")


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        m = init_model([5, 3], 7, seed=16, metadata={"note": "round-trip"})
        path = tmp_path / "m.model"
        save_model(m, path)
        loaded = load_model(path)
        for (ka, pa), (kb, pb) in zip(
            m.param_dict().items(), loaded.param_dict().items()
        ):
            assert ka == kb
            assert pa.tobytes() == pb.tobytes()
        assert loaded.mask == m.mask
        assert loaded.class_names == m.class_names
        assert loaded.metadata["note"] == "round-trip"

    def test_corrupted_payload(self, tmp_path):
        m = init_model([4], 5, seed=17)
        path = tmp_path / "m.model"
        save_model(m, path)
        raw = bytearray(path.read_bytes())
        raw[-40] ^= 0xFF  # last weight byte, before the 32-byte checksum
        path.write_bytes(bytes(raw))
        with pytest.raises(ModelChecksumError):
            load_model(path)

    def test_future_version(self, tmp_path):
        m = init_model([4], 5, seed=18)
        path = tmp_path / "m.model"
        save_model(m, path)
        raw = path.read_bytes()
        path.write_bytes(raw.replace(b"BLENDLSTM-MODEL 1\n", b"BLENDLSTM-MODEL 9\n", 1))
        with pytest.raises(ModelVersionError):
            load_model(path)

    def test_truncated(self, tmp_path):
        m = init_model([4], 5, seed=19)
        path = tmp_path / "m.model"
        save_model(m, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises((ModelTruncatedError, ModelChecksumError)):
            load_model(path)

    def test_not_a_model(self, tmp_path):
        path = tmp_path / "junk"
        path.write_bytes(b"hello world\n")
        with pytest.raises(ModelTruncatedError):
            load_model(path)
