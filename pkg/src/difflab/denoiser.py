"""Time-conditioned fully connected denoiser with hand-written backprop.

The network maps ``concat(z, time_features(t))`` through ``num_layers``
affine layers with ReLU between them and a linear output layer.  Weights are
stored as ``(fan_in, fan_out)`` so a batch of row vectors is pushed through
with ``h @ W + b``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .forward import make_rng
from .schedule import TargetSpace
from .targets import Prediction

TIME_FEATURE_DIM = 5

CHECKPOINT_MAGIC = b"DLLM"
CHECKPOINT_VERSION = 1
_SPACE_CODES = {TargetSpace.X: 0, TargetSpace.EPS: 1, TargetSpace.V: 2, TargetSpace.S: 3}
_ACTIVATION_CODES = {"relu": 0}


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    data_dim: int = 2
    time_feature_dim: int = TIME_FEATURE_DIM
    hidden_width: int = 128
    num_layers: int = 7
    activation: str = "relu"

    def __post_init__(self):
        if self.time_feature_dim != TIME_FEATURE_DIM:
            raise ValueError(f"time features are fixed at {TIME_FEATURE_DIM} dims")
        if self.num_layers < 2 or self.hidden_width < 1 or self.data_dim < 1:
            raise ValueError(f"invalid architecture {self}")
        if self.activation not in _ACTIVATION_CODES:
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = [self.data_dim + self.time_feature_dim]
        dims += [self.hidden_width] * (self.num_layers - 1)
        dims += [self.data_dim]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def num_parameters(self) -> int:
        return sum(i * o + o for i, o in self.layer_shapes)


@dataclass
class DenoiserModel:
    arch: Architecture
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    predict_space: TargetSpace = TargetSpace.EPS

    def __post_init__(self):
        self.predict_space = TargetSpace.parse(self.predict_space)
        shapes = self.arch.layer_shapes
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ValueError("layer count does not match architecture")
        for (i, o), w, b in zip(shapes, self.weights, self.biases):
            if w.shape != (i, o) or b.shape != (o,):
                raise ValueError(f"parameter shapes {w.shape}, {b.shape} != ({i}, {o})")

    def parameters(self) -> list[np.ndarray]:
        """Flat list ``[W0, b0, W1, b1, ...]``; the arrays are the live parameters."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def dtype(self):
        return self.weights[0].dtype

    def astype(self, dtype) -> "DenoiserModel":
        return DenoiserModel(
            self.arch,
            [w.astype(dtype) for w in self.weights],
            [b.astype(dtype) for b in self.biases],
            self.predict_space,
        )

    def copy(self) -> "DenoiserModel":
        return DenoiserModel(
            self.arch,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.predict_space,
        )

    def predict(self, z, t) -> np.ndarray:
        return forward(self, z, t).value


@dataclass
class GradientBundle:
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    def flat(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def time_features(t) -> np.ndarray:
    """``[t, sin 2 pi t, cos 2 pi t, sin 4 pi t, cos 4 pi t]`` along the last axis."""
    t = np.asarray(t, dtype=np.float64)
    return np.stack(
        [
            t,
            np.sin(2.0 * np.pi * t),
            np.cos(2.0 * np.pi * t),
            np.sin(4.0 * np.pi * t),
            np.cos(4.0 * np.pi * t),
        ],
        axis=-1,
    )


def init(arch: Architecture, seed: int, predict_space=TargetSpace.EPS,
         dtype=np.float64) -> DenoiserModel:
    """Glorot-uniform weights, zero biases; draws are made in float64 then cast."""
    rng = make_rng(seed, "init")
    weights, biases = [], []
    for fan_in, fan_out in arch.layer_shapes:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return DenoiserModel(arch, weights, biases, predict_space)


def _inputs(model: DenoiserModel, z, t) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != model.arch.data_dim:
        raise ValueError(f"expected data dim {model.arch.data_dim}, got {z.shape}")
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), z.shape[:-1])
    return np.concatenate([z, time_features(t)], axis=-1)


def forward_pass(model: DenoiserModel, z, t):
    """Network output plus the per-layer inputs needed by :func:`backward_pass`."""
    dtype = model.weights[0].dtype
    h = _inputs(model, z, t).astype(dtype, copy=False)
    layer_inputs = []
    last = len(model.weights) - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        layer_inputs.append(h)
        h = h @ w
        h += b
        if k < last:
            np.maximum(h, 0.0, out=h)
    return h, layer_inputs


def backward_pass(model: DenoiserModel, layer_inputs, upstream) -> GradientBundle:
    """Gradients summed over the batch, for loss gradient ``upstream`` w.r.t. the output."""
    g = np.asarray(upstream).astype(model.weights[0].dtype, copy=False)
    g = g.reshape(-1, g.shape[-1])
    n = len(model.weights)
    grad_w, grad_b = [None] * n, [None] * n
    for k in range(n - 1, -1, -1):
        h = layer_inputs[k].reshape(-1, layer_inputs[k].shape[-1])
        grad_w[k] = h.T @ g
        grad_b[k] = g.sum(axis=0)
        if k > 0:
            # h is the post-ReLU activation of layer k-1; h > 0 iff its pre-activation was.
            g = g @ model.weights[k].T
            g *= h > 0.0
    return GradientBundle(grad_w, grad_b)


def forward(model: DenoiserModel, z, t) -> Prediction:
    out, _ = forward_pass(model, z, t)
    return Prediction(model.predict_space, out)


def backward(model: DenoiserModel, z, t, upstream_grad) -> GradientBundle:
    out, cache = forward_pass(model, z, t)
    if np.shape(upstream_grad) != out.shape:
        raise ValueError(f"upstream gradient shape {np.shape(upstream_grad)} != {out.shape}")
    return backward_pass(model, cache, upstream_grad)


def save_checkpoint(model: DenoiserModel, path) -> None:
    """Binary layout: magic, version, six u32 header fields, then float64 parameters."""
    arch = model.arch
    header = CHECKPOINT_MAGIC + struct.pack(
        "<7I",
        CHECKPOINT_VERSION,
        arch.data_dim,
        arch.time_feature_dim,
        arch.hidden_width,
        arch.num_layers,
        _ACTIVATION_CODES[arch.activation],
        _SPACE_CODES[model.predict_space],
    )
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.parameters())
    with open(path, "wb") as fh:
        fh.write(header + body)


def load_checkpoint(path) -> DenoiserModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 32 or blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a denoiser checkpoint (bad magic)")
    version, data_dim, tdim, width, layers, act, space = struct.unpack("<7I", blob[4:32])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    activation = {v: k for k, v in _ACTIVATION_CODES.items()}.get(act)
    predict_space = {v: k for k, v in _SPACE_CODES.items()}.get(space)
    if activation is None or predict_space is None:
        raise CheckpointError(f"{path}: corrupt header")
    try:
        arch = Architecture(data_dim, tdim, width, layers, activation)
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    params = np.frombuffer(blob, dtype="<f8", offset=32)
    if params.size != arch.num_parameters:
        raise CheckpointError(f"{path}: expected {arch.num_parameters} parameters, got {params.size}")
    weights, biases, pos = [], [], 0
    for fan_in, fan_out in arch.layer_shapes:
        weights.append(params[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out).astype(np.float64))
        pos += fan_in * fan_out
        biases.append(params[pos : pos + fan_out].astype(np.float64))
        pos += fan_out
    return DenoiserModel(arch, weights, biases, predict_space)
