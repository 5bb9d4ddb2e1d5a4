"""Fully-connected autoencoder with hand-written backprop and Adam.

All parameters of a model live in one contiguous float64 vector. The
flattening order is fixed: layers in sequence, each layer's weight matrix
(out x in, row-major) followed by its bias. ``Model.layers`` exposes
``(W, b)`` views into that vector, so updating the vector updates the layers.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np


class ActivationKind(str, enum.Enum):
    RELU = "relu"
    IDENTITY = "identity"


@dataclass(frozen=True)
class ArchSpec:
    n_features: int
    encoder_hidden: tuple[int, ...]
    latent: int
    decoder_hidden: tuple[int, ...]
    activation: ActivationKind = ActivationKind.RELU

    def __post_init__(self):
        object.__setattr__(self, "encoder_hidden", tuple(int(w) for w in self.encoder_hidden))
        object.__setattr__(self, "decoder_hidden", tuple(int(w) for w in self.decoder_hidden))
        object.__setattr__(self, "activation", ActivationKind(self.activation))
        if min(self.widths) < 1:
            raise ValueError(f"all widths must be >= 1, got {self.widths}")

    @property
    def widths(self) -> tuple[int, ...]:
        return (
            self.n_features,
            *self.encoder_hidden,
            self.latent,
            *self.decoder_hidden,
            self.n_features,
        )

    @property
    def latent_index(self) -> int:
        """Index of the layer whose output is the bottleneck."""
        return len(self.encoder_hidden)

    def layer_shapes(self) -> list[tuple[int, int]]:
        w = self.widths
        return [(w[i + 1], w[i]) for i in range(len(w) - 1)]

    def activated(self) -> list[bool]:
        """Which layers pass their output through the activation.

        Hidden layers only; the latent and output layers stay affine.
        """
        n_layers = len(self.widths) - 1
        relu = self.activation is ActivationKind.RELU
        return [relu and j != self.latent_index and j != n_layers - 1 for j in range(n_layers)]


def ae_arch(n_features: int, hidden: int, latent: int) -> ArchSpec:
    """The nonlinear family ``n -> h -> l -> h -> n`` with ReLU hidden layers."""
    return ArchSpec(n_features, (hidden,), latent, (hidden,), ActivationKind.RELU)


def linear_ae_arch() -> ArchSpec:
    """``25 -> 100 -> 100 -> 20 -> 100 -> 100 -> 25`` with no activations (29,445 params)."""
    return ArchSpec(25, (100, 100), 20, (100, 100), ActivationKind.IDENTITY)


def param_count(arch: ArchSpec) -> int:
    return sum(o * i + o for o, i in arch.layer_shapes())


def _views(arch: ArchSpec, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    k = 0
    for o, i in arch.layer_shapes():
        W = flat[k : k + o * i].reshape(o, i)
        k += o * i
        b = flat[k : k + o]
        k += o
        out.append((W, b))
    return out


@dataclass(eq=False)
class Model:
    arch: ArchSpec
    params: np.ndarray
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.params.shape != (param_count(self.arch),):
            raise ValueError("parameter vector does not match architecture")
        self.layers = _views(self.arch, self.params)

    def copy(self) -> Model:
        return Model(self.arch, self.params.copy())


@dataclass(eq=False)
class Gradients:
    arch: ArchSpec
    flat: np.ndarray

    def __post_init__(self):
        self.layers = _views(self.arch, self.flat)


def init_model(arch: ArchSpec, seed: int) -> Model:
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` for weights and biases alike."""
    rng = np.random.Generator(np.random.PCG64(seed))
    params = np.empty(param_count(arch))
    model = Model(arch, params)
    for W, b in model.layers:
        bound = 1.0 / np.sqrt(W.shape[1])
        W[...] = rng.uniform(-bound, bound, size=W.shape)
        b[...] = rng.uniform(-bound, bound, size=b.shape)
    return model


def zero_model(arch: ArchSpec) -> Model:
    return Model(arch, np.zeros(param_count(arch)))


@dataclass
class ForwardCache:
    model_id: int
    version: int
    inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]
    output: np.ndarray


def forward(model: Model, batch: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != model.arch.n_features:
        raise ValueError(
            f"batch must have shape (B, {model.arch.n_features}), got {batch.shape}"
        )
    inputs, pre = [], []
    a = batch
    for (W, b), act in zip(model.layers, model.arch.activated()):
        inputs.append(a)
        z = a @ W.T + b
        pre.append(z)
        a = np.maximum(z, 0.0) if act else z
    return a, ForwardCache(id(model), model.version, inputs, pre, a)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def backward(model: Model, cache: ForwardCache, target: np.ndarray) -> Gradients:
    """Gradient of the mean-reduced MSE with respect to every parameter."""
    if cache.model_id != id(model) or cache.version != model.version:
        raise RuntimeError("forward cache is stale or belongs to another model")
    target = np.asarray(target, dtype=np.float64)
    if target.shape != cache.output.shape:
        raise ValueError(f"target shape {target.shape} != output shape {cache.output.shape}")

    grads = Gradients(model.arch, np.zeros_like(model.params))
    acts = model.arch.activated()
    delta = (cache.output - target) * (2.0 / target.size)
    for j in range(len(model.layers) - 1, -1, -1):
        if acts[j]:
            # ReLU subgradient at 0 is 0
            delta = delta * (cache.pre_activations[j] > 0.0)
        gW, gb = grads.layers[j]
        np.dot(delta.T, cache.inputs[j], out=gW)
        gb[...] = delta.sum(axis=0)
        if j > 0:
            delta = delta @ model.layers[j][0]
    return grads


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_model(cls, model: Model, **hyper) -> AdamState:
        return cls(np.zeros_like(model.params), np.zeros_like(model.params), **hyper)


def adam_step(model: Model, grads: Gradients, state: AdamState) -> tuple[Model, AdamState]:
    """One bias-corrected Adam update, applied in place to ``model`` and ``state``.

    Uses the folded form ``lr * sqrt(c2) / c1 * m / (sqrt(v) + eps * sqrt(c2))``,
    which equals ``lr * m_hat / (sqrt(v_hat) + eps)`` exactly in real arithmetic
    and skips two full-vector divisions.
    """
    g = grads.flat
    if g.shape != model.params.shape or state.first_moment.shape != g.shape:
        raise ValueError("gradient / state shapes do not match the model")
    state.step += 1
    t = state.step
    m, v = state.first_moment, state.second_moment
    m[...] = state.beta1 * m + (1.0 - state.beta1) * g
    v[...] = state.beta2 * v + (1.0 - state.beta2) * (g * g)
    root_c2 = np.sqrt(1.0 - state.beta2**t)
    step_size = state.lr * root_c2 / (1.0 - state.beta1**t)
    model.params -= step_size * m / (np.sqrt(v) + state.epsilon * root_c2)
    model.version += 1
    return model, state


# -- checkpoint file -------------------------------------------------------

MODEL_MAGIC = b"DDM1"
_ACT_CODES = {ActivationKind.RELU: 0, ActivationKind.IDENTITY: 1}


def save_model(model: Model, path) -> None:
    """Write ``DDM1`` checkpoint: little-endian int64 arch header, then float64 params.

    Header after the magic: n_features, n_encoder, *encoder_hidden, latent,
    n_decoder, *decoder_hidden, activation code (0 relu, 1 identity).
    """
    a = model.arch
    ints = [a.n_features, len(a.encoder_hidden), *a.encoder_hidden, a.latent,
            len(a.decoder_hidden), *a.decoder_hidden, _ACT_CODES[a.activation]]
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack(f"<{len(ints)}q", *ints))
        fh.write(model.params.astype("<f8").tobytes())


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a DDM1 model file")
    pos = 4

    def take(k):
        nonlocal pos
        vals = struct.unpack_from(f"<{k}q", raw, pos)
        pos += 8 * k
        return vals

    (n_features, n_enc) = take(2)
    enc = take(n_enc)
    (latent, n_dec) = take(2)
    dec = take(n_dec)
    (code,) = take(1)
    act = {v: k for k, v in _ACT_CODES.items()}[code]
    arch = ArchSpec(n_features, enc, latent, dec, act)
    params = np.frombuffer(raw, dtype="<f8", offset=pos).astype(np.float64)
    return Model(arch, params)
