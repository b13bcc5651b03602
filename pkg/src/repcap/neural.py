"""Small symmetric MLP autoencoder trained with ADAM on mean squared error."""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

CHECKPOINT_MAGIC = b"RCAE0001"


class TrainingError(RuntimeError):
    pass


class Activation(str, Enum):
    TANH = "tanh"
    RELU = "relu"
    IDENTITY = "identity"


_ACT_CODES = {Activation.TANH: 0, Activation.RELU: 1, Activation.IDENTITY: 2}


def _apply(act: Activation, z: np.ndarray) -> np.ndarray:
    if act is Activation.TANH:
        return np.tanh(z)
    if act is Activation.RELU:
        return np.maximum(z, 0.0)
    return z


def _derivative(act: Activation, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if act is Activation.TANH:
        return 1.0 - a * a
    if act is Activation.RELU:
        return (z > 0).astype(z.dtype)
    return np.ones_like(z)


@dataclass
class MlpAutoencoder:
    """Dense layers ``d -> h -> z -> h -> d``.

    Hidden layers use ``activation``; the bottleneck and the output layer are
    linear. Weight matrices are stored as ``fan_in x fan_out``.
    """

    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: Activation = Activation.TANH

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        self.activation = Activation(self.activation)
        n_layers = len(self.layer_dims) - 1
        if n_layers < 2 or n_layers % 2:
            raise ValueError("layer_dims must describe an even number of layers")
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ValueError("one weight matrix and bias vector per layer required")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.layer_dims[i], self.layer_dims[i + 1]):
                raise ValueError(f"layer {i} weight shape {W.shape} breaks the dims chain")
            if b.shape != (self.layer_dims[i + 1],):
                raise ValueError(f"layer {i} bias shape {b.shape} breaks the dims chain")

    @classmethod
    def initialize(cls, layer_dims, seed=0, activation=Activation.TANH) -> MlpAutoencoder:
        """Xavier-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(tuple(layer_dims), weights, biases, activation)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def bottleneck_layer(self) -> int:
        return self.n_layers // 2 - 1

    def layer_activation(self, layer: int) -> Activation:
        if layer in (self.bottleneck_layer, self.n_layers - 1):
            return Activation.IDENTITY
        return self.activation

    def parameters(self) -> list[np.ndarray]:
        params = []
        for W, b in zip(self.weights, self.biases):
            params.extend((W, b))
        return params

    def with_parameters(self, params: list[np.ndarray]) -> MlpAutoencoder:
        return MlpAutoencoder(
            self.layer_dims, list(params[0::2]), list(params[1::2]), self.activation
        )


def _forward_trace(model: MlpAutoencoder, batch: np.ndarray):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != model.layer_dims[0]:
        raise ValueError(
            f"batch shape {batch.shape} does not match input dimension {model.layer_dims[0]}"
        )
    pre, post = [], [batch]
    a = batch
    for layer, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W + b
        a = _apply(model.layer_activation(layer), z)
        pre.append(z)
        post.append(a)
    return pre, post


def forward(model: MlpAutoencoder, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(reconstruction, bottleneck)``."""
    _, post = _forward_trace(model, batch)
    return post[-1], post[model.bottleneck_layer + 1]


def encode(model: MlpAutoencoder, batch: np.ndarray) -> np.ndarray:
    return forward(model, batch)[1]


def mse_loss(reconstruction: np.ndarray, target: np.ndarray) -> float:
    reconstruction = np.asarray(reconstruction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if reconstruction.shape != target.shape:
        raise ValueError(f"shape mismatch {reconstruction.shape} vs {target.shape}")
    return float(np.mean((reconstruction - target) ** 2))


def backward(model: MlpAutoencoder, batch: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Loss and exact gradients, ordered like ``model.parameters()``."""
    pre, post = _forward_trace(model, batch)
    batch = post[0]
    recon = post[-1]
    loss = mse_loss(recon, batch)
    delta = 2.0 * (recon - batch) / recon.size
    grads: list[np.ndarray] = [None] * (2 * model.n_layers)
    for layer in range(model.n_layers - 1, -1, -1):
        act = model.layer_activation(layer)
        delta = delta * _derivative(act, pre[layer], post[layer + 1])
        grads[2 * layer] = post[layer].T @ delta
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer:
            delta = delta @ model.weights[layer].T
    return loss, grads


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("step count must be >= 0")


def adam_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: AdamState
) -> tuple[list[np.ndarray], AdamState]:
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(grads) != len(params) or any(
        g.shape != p.shape or m.shape != p.shape for p, g, m in zip(params, grads, state.m)
    ):
        raise ValueError("parameter, gradient and moment shapes must match")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    updated = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        updated.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return updated, state


@dataclass
class AutoencoderFit:
    model: MlpAutoencoder
    codes: np.ndarray
    losses: list[float]
    column_mean: np.ndarray
    column_scale: np.ndarray
    seed: int


def standardize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return (X - mean) / scale, mean, scale


def default_hidden(z: int) -> int:
    return max(2 * z, 32)


def train_autoencoder(
    X: np.ndarray,
    z: int = 64,
    epochs: int = 50,
    batch_size: int = 32,
    seed: int = 0,
    hidden: int | None = None,
    lr: float = 1e-3,
    activation: Activation | str = Activation.TANH,
    standardize_inputs: bool = True,
) -> AutoencoderFit:
    """Fit a ``d-h-z-h-d`` autoencoder and return the bottleneck codes of every row."""
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if not 1 <= z < d:
        raise ValueError(f"bottleneck z={z} must satisfy 1 <= z < input dimension {d}")
    if epochs < 1 or batch_size < 1:
        raise ValueError("epochs and batch_size must be >= 1")
    if hidden is None:
        hidden = default_hidden(z)
    if standardize_inputs:
        data, mean, scale = standardize(X)
    else:
        data, mean, scale = X, np.zeros(d), np.ones(d)

    init_seq, shuffle_seq = np.random.SeedSequence(seed).spawn(2)
    model = MlpAutoencoder.initialize(
        (d, hidden, z, hidden, d), np.random.default_rng(init_seq), Activation(activation)
    )
    shuffle_rng = np.random.default_rng(shuffle_seq)
    state = AdamState(lr=lr)
    params = model.parameters()
    losses = []
    for epoch in range(1, epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            rows = data[order[start : start + batch_size]]
            loss, grads = backward(model, rows)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch starting {start}")
            params, state = adam_step(params, grads, state)
            model = model.with_parameters(params)
            total += loss * rows.shape[0]
        losses.append(total / n)
    if not all(np.all(np.isfinite(p)) for p in params):
        raise TrainingError("non-finite parameters after training")
    return AutoencoderFit(model, encode(model, data), losses, mean, scale, seed)


def save_checkpoint(model: MlpAutoencoder, path) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(model))


def checkpoint_bytes(model: MlpAutoencoder) -> bytes:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<QQ", len(model.layer_dims), _ACT_CODES[model.activation]))
    buf.write(struct.pack(f"<{len(model.layer_dims)}Q", *model.layer_dims))
    for p in model.parameters():
        buf.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return buf.getvalue()


def load_checkpoint(path) -> MlpAutoencoder:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError("not an autoencoder checkpoint")
    n_dims, act_code = struct.unpack_from("<QQ", raw, 8)
    dims = struct.unpack_from(f"<{n_dims}Q", raw, 24)
    offset = 24 + 8 * n_dims
    act = {v: k for k, v in _ACT_CODES.items()}[act_code]
    params = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        for shape in ((fan_in, fan_out), (fan_out,)):
            count = int(np.prod(shape))
            params.append(np.frombuffer(raw, "<f8", count, offset).reshape(shape).copy())
            offset += 8 * count
    return MlpAutoencoder(dims, params[0::2], params[1::2], act)


def write_training_log(losses: list[float], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,loss\n")
        for epoch, loss in enumerate(losses, start=1):
            fh.write(f"{epoch},{loss!r}\n")
