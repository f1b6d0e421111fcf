"""Stacked LSTM with a dense softmax head, implemented on numpy.

Forward runs any number of LSTM layers over a (batch, time, features)
input, optionally from a carried hidden state; backward is full
backpropagation through time for the MSE / CCE / focal losses. All math
is float64.

Per layer the four gate parameter blocks are stacked row-wise in the
fixed order input, forget, candidate, output:

    W: (4u, in_dim)   input weights
    U: (4u, u)        recurrent weights
    b: (4u,)          biases
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    ModelChecksumError,
    ModelTruncatedError,
    ModelVersionError,
    ShapeError,
)
from .featsel import FeatureMask
from .dataio import CLASS_NAMES
from .lossmetrics import FocalConfig, loss_grad_probs, loss_value

MODEL_FORMAT_VERSION = 1
_MAGIC = b"BLENDLSTM-MODEL"

GATE_ORDER = ("input", "forget", "candidate", "output")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shift-invariant and overflow-safe."""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


@dataclass
class LstmLayerParams:
    """One LSTM layer's stacked gate parameters."""

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    @property
    def units(self) -> int:
        return self.U.shape[1]

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    def validate(self):
        u = self.units
        if self.W.shape != (4 * u, self.in_dim) or self.U.shape != (4 * u, u):
            raise ShapeError(f"inconsistent layer shapes W{self.W.shape} U{self.U.shape}")
        if self.b.shape != (4 * u,):
            raise ShapeError(f"bias shape {self.b.shape}, expected ({4 * u},)")
        for arr in (self.W, self.U, self.b):
            if not np.all(np.isfinite(arr)):
                raise ShapeError("non-finite layer parameter")


@dataclass
class DenseParams:
    """The 3-way softmax head."""

    W: np.ndarray  # (3, units)
    b: np.ndarray  # (3,)


@dataclass
class Model:
    """Stacked-LSTM classifier with its embedded feature mask and metadata."""

    layers: list[LstmLayerParams]
    head: DenseParams
    mask: FeatureMask
    class_names: tuple[str, ...] = CLASS_NAMES
    metadata: dict = field(default_factory=dict)

    @property
    def layer_units(self) -> tuple[int, ...]:
        return tuple(layer.units for layer in self.layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    def validate(self):
        if not self.layers:
            raise ConfigError("model needs at least one LSTM layer")
        if self.in_dim != len(self.mask):
            raise ConfigError(
                f"layer 0 input dim {self.in_dim} != mask size {len(self.mask)}"
            )
        prev = None
        for k, layer in enumerate(self.layers):
            layer.validate()
            if prev is not None and layer.in_dim != prev:
                raise ConfigError(f"layer {k} input dim {layer.in_dim} != {prev} units")
            prev = layer.units
        if self.head.W.shape != (3, prev) or self.head.b.shape != (3,):
            raise ShapeError(f"head shape {self.head.W.shape} does not match top layer")

    def param_dict(self) -> dict[str, np.ndarray]:
        """Live parameter arrays keyed by a stable name, in declared order."""
        out: dict[str, np.ndarray] = {}
        for k, layer in enumerate(self.layers):
            out[f"layer{k}.W"] = layer.W
            out[f"layer{k}.U"] = layer.U
            out[f"layer{k}.b"] = layer.b
        out["head.W"] = self.head.W
        out["head.b"] = self.head.b
        return out

    def num_params(self) -> int:
        return sum(a.size for a in self.param_dict().values())


@dataclass
class HiddenState:
    """Per-layer hidden and cell vectors carried across forward calls."""

    h: list[np.ndarray]  # each (B, units)
    c: list[np.ndarray]

    def copy(self) -> "HiddenState":
        return HiddenState([a.copy() for a in self.h], [a.copy() for a in self.c])


def zero_state(model: Model, batch: int = 1) -> HiddenState:
    return HiddenState(
        h=[np.zeros((batch, layer.units)) for layer in model.layers],
        c=[np.zeros((batch, layer.units)) for layer in model.layers],
    )


@dataclass
class ForwardCache:
    """Everything backward needs: per layer, per timestep activations."""

    x: list[np.ndarray]  # per layer: (T, B, in_dim) inputs
    h_prev: list[np.ndarray]  # per layer: (T, B, u)
    c_prev: list[np.ndarray]
    i: list[np.ndarray]
    f: list[np.ndarray]
    g: list[np.ndarray]
    o: list[np.ndarray]
    c: list[np.ndarray]
    h: list[np.ndarray]
    logits: np.ndarray  # (B, 3)
    probs: np.ndarray  # (B, 3)
    num_params: int  # consistency check against the model in backward


def init_model(
    layer_units,
    in_dim: int,
    seed: int,
    mask: FeatureMask | None = None,
    metadata: dict | None = None,
) -> Model:
    """Build a fresh model, deterministically for a given seed.

    Input weights are Glorot-uniform, recurrent weights orthogonal, biases
    zero except the forget gate's, which starts at 1.
    """
    layer_units = [int(u) for u in layer_units]
    if not layer_units:
        raise ConfigError("layer_units must be non-empty")
    if any(u <= 0 for u in layer_units):
        raise ConfigError(f"layer units must be positive, got {layer_units}")
    if in_dim <= 0:
        raise ConfigError(f"input dim must be positive, got {in_dim}")
    if mask is None:
        mask = FeatureMask(
            kept_indices=tuple(range(in_dim)),
            source_names=tuple(f"feature_{j}" for j in range(in_dim)),
        )
    if len(mask) != in_dim:
        raise ConfigError(f"mask keeps {len(mask)} features but in_dim is {in_dim}")

    rng = np.random.default_rng(seed)
    layers: list[LstmLayerParams] = []
    prev = in_dim
    for u in layer_units:
        W_gates = []
        U_gates = []
        b_gates = []
        bound = np.sqrt(6.0 / (prev + u))
        for gate in GATE_ORDER:
            W_gates.append(rng.uniform(-bound, bound, size=(u, prev)))
            a = rng.standard_normal((u, u))
            q, r = np.linalg.qr(a)
            q = q * np.sign(np.diag(r))
            U_gates.append(q)
            b_gates.append(np.full(u, 1.0) if gate == "forget" else np.zeros(u))
        layers.append(
            LstmLayerParams(
                W=np.concatenate(W_gates, axis=0),
                U=np.concatenate(U_gates, axis=0),
                b=np.concatenate(b_gates),
            )
        )
        prev = u

    bound = np.sqrt(6.0 / (prev + 3))
    head = DenseParams(W=rng.uniform(-bound, bound, size=(3, prev)), b=np.zeros(3))

    model = Model(layers=layers, head=head, mask=mask, metadata=dict(metadata or {}))
    model.validate()
    return model


def lstm_cell_forward(x, h_prev, c_prev, p: LstmLayerParams):
    """One LSTM cell step on a (B, in_dim) input.

    Returns (h, c, gates) where gates is the (i, f, g, o) tuple.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    h_prev = np.atleast_2d(np.asarray(h_prev, dtype=np.float64))
    c_prev = np.atleast_2d(np.asarray(c_prev, dtype=np.float64))
    u = p.units
    if x.shape[1] != p.in_dim or h_prev.shape[1] != u or c_prev.shape[1] != u:
        raise ShapeError(
            f"cell input shapes x{x.shape} h{h_prev.shape} c{c_prev.shape} "
            f"do not match layer ({p.in_dim} -> {u})"
        )
    z = x @ p.W.T + h_prev @ p.U.T + p.b
    i = _sigmoid(z[:, 0 * u : 1 * u])
    f = _sigmoid(z[:, 1 * u : 2 * u])
    g = np.tanh(z[:, 2 * u : 3 * u])
    o = _sigmoid(z[:, 3 * u : 4 * u])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, (i, f, g, o)


def forward(
    model: Model, seq: np.ndarray, state: HiddenState | None = None
) -> tuple[np.ndarray, ForwardCache, HiddenState]:
    """Run the network over one sequence of masked feature vectors.

    ``seq`` is (T, in_dim) for a single sequence or (B, T, in_dim) for a
    batch. Returns (probabilities, cache, final state); probabilities are
    (3,) or (B, 3) to match the input rank.
    """
    seq = np.asarray(seq, dtype=np.float64)
    single = seq.ndim == 2
    if single:
        seq = seq[None, :, :]
    if seq.ndim != 3:
        raise ShapeError(f"expected (T, D) or (B, T, D) input, got shape {seq.shape}")
    B, T, D = seq.shape
    if T == 0:
        raise ShapeError("sequence must be non-empty")
    if D != model.in_dim:
        raise ShapeError(f"feature dim {D} != model input dim {model.in_dim}")

    if state is None:
        state = zero_state(model, B)
    L = len(model.layers)
    cache = ForwardCache(
        x=[np.empty((T, B, layer.in_dim)) for layer in model.layers],
        h_prev=[np.empty((T, B, layer.units)) for layer in model.layers],
        c_prev=[np.empty((T, B, layer.units)) for layer in model.layers],
        i=[np.empty((T, B, layer.units)) for layer in model.layers],
        f=[np.empty((T, B, layer.units)) for layer in model.layers],
        g=[np.empty((T, B, layer.units)) for layer in model.layers],
        o=[np.empty((T, B, layer.units)) for layer in model.layers],
        c=[np.empty((T, B, layer.units)) for layer in model.layers],
        h=[np.empty((T, B, layer.units)) for layer in model.layers],
        logits=np.empty((B, 3)),
        probs=np.empty((B, 3)),
        num_params=model.num_params(),
    )

    h_cur = [a.copy() for a in state.h]
    c_cur = [a.copy() for a in state.c]
    for t in range(T):
        inp = seq[:, t, :]
        for l, layer in enumerate(model.layers):
            cache.x[l][t] = inp
            cache.h_prev[l][t] = h_cur[l]
            cache.c_prev[l][t] = c_cur[l]
            h, c, (i, f, g, o) = lstm_cell_forward(inp, h_cur[l], c_cur[l], layer)
            cache.i[l][t], cache.f[l][t] = i, f
            cache.g[l][t], cache.o[l][t] = g, o
            cache.c[l][t], cache.h[l][t] = c, h
            h_cur[l], c_cur[l] = h, c
            inp = h

    logits = h_cur[-1] @ model.head.W.T + model.head.b
    probs = softmax(logits)
    cache.logits = logits
    cache.probs = probs
    out_state = HiddenState(h=h_cur, c=c_cur)
    return (probs[0] if single else probs), cache, out_state


def backward(
    model: Model,
    cache: ForwardCache,
    target: np.ndarray,
    loss: str,
    focal_cfg: FocalConfig = FocalConfig(),
) -> dict[str, np.ndarray]:
    """Exact gradients of the selected loss at the cached forward point.

    ``target`` is a one-hot (3,) vector or a (B, 3) batch; for a batch the
    loss is the mean over samples. Returns gradients keyed like
    ``Model.param_dict``.
    """
    if cache.num_params != model.num_params():
        raise ConfigError("forward cache does not belong to this model")
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    probs = cache.probs
    if target.shape != probs.shape:
        raise ShapeError(f"target shape {target.shape} != probs shape {probs.shape}")
    B = probs.shape[0]
    T = cache.x[0].shape[0]

    # mean-over-batch loss: fold 1/B into the probability gradient
    dprobs = loss_grad_probs(loss, target, probs, focal_cfg) / B
    # softmax jacobian: dz_j = p_j * (dp_j - sum_k dp_k p_k)
    dlogits = probs * (dprobs - np.sum(dprobs * probs, axis=-1, keepdims=True))

    grads: dict[str, np.ndarray] = {
        "head.W": dlogits.T @ cache.h[-1][T - 1],
        "head.b": dlogits.sum(axis=0),
    }

    # gradient flowing into each layer's h outputs from the layer above
    # (or from the head, for the top layer)
    L = len(model.layers)
    dh_above = np.zeros((T, B, model.layers[-1].units))
    dh_above[T - 1] = dlogits @ model.head.W

    for l in range(L - 1, -1, -1):
        layer = model.layers[l]
        u = layer.units
        dW = np.zeros_like(layer.W)
        dU = np.zeros_like(layer.U)
        db = np.zeros_like(layer.b)
        dx_below = np.zeros((T, B, layer.in_dim))
        dh_next = np.zeros((B, u))
        dc_next = np.zeros((B, u))
        for t in range(T - 1, -1, -1):
            i, f, g, o = cache.i[l][t], cache.f[l][t], cache.g[l][t], cache.o[l][t]
            c = cache.c[l][t]
            tanh_c = np.tanh(c)
            dh = dh_above[t] + dh_next
            do = dh * tanh_c
            dc = dc_next + dh * o * (1.0 - tanh_c**2)
            di = dc * g
            df = dc * cache.c_prev[l][t]
            dg = dc * i
            dc_next = dc * f
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g**2),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            dW += dz.T @ cache.x[l][t]
            dU += dz.T @ cache.h_prev[l][t]
            db += dz.sum(axis=0)
            dx_below[t] = dz @ layer.W
            dh_next = dz @ layer.U
        grads[f"layer{l}.W"] = dW
        grads[f"layer{l}.U"] = dU
        grads[f"layer{l}.b"] = db
        dh_above = dx_below

    return grads


def batch_loss(
    model: Model,
    cache: ForwardCache,
    target: np.ndarray,
    loss: str,
    focal_cfg: FocalConfig = FocalConfig(),
) -> float:
    """Mean loss over the cached batch."""
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    return float(
        np.mean(
            [loss_value(loss, y, p, focal_cfg) for y, p in zip(target, cache.probs)]
        )
    )


# ---------------------------------------------------------------------------
# model file format
#
#   BLENDLSTM-MODEL <version>\n
#   8-byte LE header length, JSON header (shapes, mask, names, metadata)
#   raw little-endian float64 weights in param_dict order
#   32-byte sha256 over all preceding bytes
# ---------------------------------------------------------------------------


def save_model(model: Model, path: str | Path) -> None:
    model.validate()
    header = {
        "format_version": MODEL_FORMAT_VERSION,
        "class_names": list(model.class_names),
        "blendshape_names": list(model.mask.source_names),
        "mask_kept_indices": list(model.mask.kept_indices),
        "layer_units": list(model.layer_units),
        "in_dim": model.in_dim,
        "metadata": model.metadata,
        "arrays": [
            {"name": name, "shape": list(arr.shape)}
            for name, arr in model.param_dict().items()
        ],
    }
    header_bytes = json.dumps(header, indent=1, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += _MAGIC + b" " + str(MODEL_FORMAT_VERSION).encode() + b"\n"
    blob += len(header_bytes).to_bytes(8, "little")
    blob += header_bytes
    for arr in model.param_dict().values():
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    blob += hashlib.sha256(bytes(blob)).digest()
    Path(path).write_bytes(bytes(blob))


def load_model(path: str | Path) -> Model:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0 or not raw[:nl].startswith(_MAGIC + b" "):
        raise ModelTruncatedError(f"{path}: not a blendlstm model file")
    try:
        version = int(raw[len(_MAGIC) + 1 : nl])
    except ValueError:
        raise ModelTruncatedError(f"{path}: unreadable version tag") from None
    if version != MODEL_FORMAT_VERSION:
        raise ModelVersionError(
            f"{path}: format version {version}, this build reads {MODEL_FORMAT_VERSION}"
        )
    if len(raw) < nl + 1 + 8 + 32:
        raise ModelTruncatedError(f"{path}: file too short")

    pos = nl + 1
    header_len = int.from_bytes(raw[pos : pos + 8], "little")
    pos += 8
    if pos + header_len + 32 > len(raw):
        raise ModelTruncatedError(f"{path}: declared header exceeds file size")
    try:
        header = json.loads(raw[pos : pos + header_len].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise ModelChecksumError(f"{path}: unreadable header") from None
    pos += header_len

    weight_bytes = sum(
        8 * int(np.prod(spec["shape"])) if spec["shape"] else 8
        for spec in header["arrays"]
    )
    expected_size = pos + weight_bytes + 32
    if len(raw) < expected_size:
        raise ModelTruncatedError(
            f"{path}: file ends {expected_size - len(raw)} bytes early"
        )
    if len(raw) > expected_size:
        raise ModelTruncatedError(f"{path}: trailing bytes after checksum")
    if hashlib.sha256(raw[:-32]).digest() != raw[-32:]:
        raise ModelChecksumError(f"{path}: checksum mismatch")

    arrays: dict[str, np.ndarray] = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        nbytes = 8 * int(np.prod(shape)) if shape else 8
        end = pos + nbytes
        arrays[spec["name"]] = (
            np.frombuffer(raw[pos:end], dtype="<f8").reshape(shape).copy()
        )
        pos = end

    layers = []
    for k in range(len(header["layer_units"])):
        layers.append(
            LstmLayerParams(
                W=arrays[f"layer{k}.W"], U=arrays[f"layer{k}.U"], b=arrays[f"layer{k}.b"]
            )
        )
    model = Model(
        layers=layers,
        head=DenseParams(W=arrays["head.W"], b=arrays["head.b"]),
        mask=FeatureMask(
            kept_indices=tuple(header["mask_kept_indices"]),
            source_names=tuple(header["blendshape_names"]),
        ),
        class_names=tuple(header["class_names"]),
        metadata=header.get("metadata", {}),
    )
    model.validate()
    return model


def make_metadata(config_digest: str | None = None) -> dict:
    """Provenance block stored in fresh model files.

    Deliberately contains no wall-clock timestamp: model files must be
    byte-identical across reruns with the same seed (the filesystem keeps
    the creation time).
    """
    meta = {"producer": f"blendlstm model format {MODEL_FORMAT_VERSION}"}
    if config_digest is not None:
        meta["training_config_digest"] = config_digest
    return meta
