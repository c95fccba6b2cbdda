"""Small fully-connected networks in plain numpy.

Enough machinery for the actor, critic, their targets and the pioneer:
seeded initialization, a batched forward pass that keeps what backprop
needs, exact reverse-mode gradients, Adam, and Polyak target tracking.
Everything is float64.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, ShapeError, UpdateRejected

HIDDEN_ACTIVATIONS = ("tanh",)
OUTPUT_ACTIVATIONS = ("tanh_scaled", "linear")


def _layer_views(flat: np.ndarray, sizes: Sequence[int]):
    weights, biases = [], []
    pos = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[pos:pos + fan_out * fan_in].reshape(fan_out, fan_in))
        pos += fan_out * fan_in
        biases.append(flat[pos:pos + fan_out])
        pos += fan_out
    return weights, biases


def n_params(sizes: Sequence[int]) -> int:
    return sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))


class NetworkParams:
    """Layer weights (fan_out x fan_in) and biases, stored as views into one flat vector."""

    def __init__(self, layer_sizes, data: Optional[np.ndarray] = None,
                 output_activation: str = "linear", low=None, high=None,
                 hidden_activation: str = "tanh"):
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        size = n_params(self.layer_sizes)
        self.data = np.zeros(size) if data is None else np.asarray(data, dtype=np.float64)
        if self.data.shape != (size,):
            raise ShapeError(f"parameter vector has shape {self.data.shape}, expected ({size},)")
        self.weights, self.biases = _layer_views(self.data, self.layer_sizes)
        self.output_activation = output_activation
        self.low = None if low is None else np.asarray(low, dtype=np.float64)
        self.high = None if high is None else np.asarray(high, dtype=np.float64)
        self.hidden_activation = hidden_activation

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def size(self) -> int:
        return self.data.size

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.layer_sizes, self.data.copy(), self.output_activation,
                             self.low, self.high, self.hidden_activation)

    def arrays(self) -> list[np.ndarray]:
        """Weights and biases interleaved per layer: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def flat(self) -> np.ndarray:
        return self.data.copy()

    def set_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != self.data.shape:
            raise ShapeError(f"flat vector has {vec.size} entries, expected {self.size}")
        self.data[...] = vec

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def same_shape(self, other: "NetworkParams") -> bool:
        return self.layer_sizes == other.layer_sizes

    def __repr__(self) -> str:
        return (f"NetworkParams(layer_sizes={self.layer_sizes}, "
                f"output_activation={self.output_activation!r})")


class ParamGrads:
    """Gradients laid out exactly like ``NetworkParams``."""

    def __init__(self, layer_sizes, data: Optional[np.ndarray] = None):
        self.layer_sizes = tuple(layer_sizes)
        self.data = np.zeros(n_params(self.layer_sizes)) if data is None else data
        self.weights, self.biases = _layer_views(self.data, self.layer_sizes)

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def flat(self) -> np.ndarray:
        return self.data.copy()

    def norm(self) -> float:
        return float(np.sqrt(self.data @ self.data))

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def scaled(self, c: float) -> "ParamGrads":
        return ParamGrads(self.layer_sizes, c * self.data)

    def __add__(self, other: "ParamGrads") -> "ParamGrads":
        return ParamGrads(self.layer_sizes, self.data + other.data)


@dataclass
class ForwardCache:
    """Inputs to every layer (post-activations) and the pre-activations."""

    activations: list[np.ndarray]
    preacts: list[np.ndarray]

    @property
    def batch_size(self) -> int:
        return self.activations[0].shape[0]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.step, self.beta1, self.beta2,
                         self.eps)


def init_params(
    layer_sizes: Sequence[int],
    output_activation: str = "linear",
    seed=None,
    low=None,
    high=None,
) -> NetworkParams:
    """Uniform fan-in initialization, zero biases.

    ``seed`` may be an int or a ``numpy.random.Generator``. For the
    ``tanh_scaled`` output the action bounds ``low``/``high`` are required.
    """
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise ConfigError(f"layer_sizes must have >= 2 positive entries, got {list(layer_sizes)}")
    if output_activation not in OUTPUT_ACTIVATIONS:
        raise ConfigError(f"unknown output activation {output_activation!r}")
    if output_activation == "tanh_scaled":
        if low is None or high is None:
            raise ConfigError("tanh_scaled output needs low and high bounds")
        low = np.asarray(low, dtype=np.float64).reshape(-1)
        high = np.asarray(high, dtype=np.float64).reshape(-1)
        if low.shape != (sizes[-1],) or high.shape != (sizes[-1],) or np.any(low >= high):
            raise ConfigError("output bounds must match output width with low < high")
    else:
        low = high = None

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = NetworkParams(sizes, None, output_activation, low, high)
    for w in params.weights:
        bound = 1.0 / np.sqrt(w.shape[1])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    return params


def _output(params: NetworkParams, z: np.ndarray) -> np.ndarray:
    if params.output_activation == "linear":
        return z
    half = 0.5 * (params.high - params.low)
    return params.low + half * (np.tanh(z) + 1.0)


def forward(params: NetworkParams, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.layer_sizes[0]:
        raise ShapeError(f"input width {x.shape[-1]} does not match {params.layer_sizes[0]}")
    activations = [x]
    preacts = []
    h = x
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        preacts.append(z)
        h = _output(params, z) if i == last else np.tanh(z)
        activations.append(h)
    return h, ForwardCache(activations, preacts)


def predict(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Forward pass without keeping a cache."""
    x = np.asarray(x, dtype=np.float64)
    h = x[None, :] if x.ndim == 1 else x
    if h.shape[1] != params.layer_sizes[0]:
        raise ShapeError(f"input width {h.shape[1]} does not match {params.layer_sizes[0]}")
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        h = _output(params, z) if i == last else np.tanh(z)
    return h


def backward(
    params: NetworkParams, cache: ForwardCache, grad_out: np.ndarray
) -> tuple[ParamGrads, np.ndarray]:
    """Vector-Jacobian product of the summed batch output with ``grad_out``.

    Returns parameter gradients (summed over the batch, no averaging) and the
    gradient with respect to the network input.
    """
    if len(cache.preacts) != params.n_layers:
        raise ShapeError("cache layer count does not match params")
    g = np.asarray(grad_out, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    out = cache.activations[-1]
    if g.shape != out.shape:
        raise ShapeError(f"upstream gradient shape {g.shape} does not match output {out.shape}")

    n = params.n_layers
    grads = ParamGrads(params.layer_sizes)
    if params.output_activation == "tanh_scaled":
        t = np.tanh(cache.preacts[-1])
        dz = g * (0.5 * (params.high - params.low)) * (1.0 - t * t)
    else:
        dz = g
    for i in range(n - 1, -1, -1):
        np.matmul(dz.T, cache.activations[i], out=grads.weights[i])
        np.sum(dz, axis=0, out=grads.biases[i])
        dh = dz @ params.weights[i]
        if i > 0:
            a = cache.activations[i]
            dz = dh * (1.0 - a * a)
    return grads, dh


def zero_grads(params: NetworkParams) -> ParamGrads:
    return ParamGrads(params.layer_sizes)


def adam_init(params: NetworkParams, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    return AdamState(np.zeros(params.size), np.zeros(params.size), 0, beta1, beta2, eps)


def adam_step(params: NetworkParams, grads: ParamGrads, state: AdamState,
              learning_rate: float) -> tuple[NetworkParams, AdamState]:
    """One Adam descent step, applied in place.

    A non-finite gradient raises ``UpdateRejected`` before anything is
    touched, so the parameters and moments stay bit-identical.
    """
    g = grads.data
    if g.shape != params.data.shape:
        raise ShapeError("gradient shapes do not match params")
    if not np.isfinite(g).all():
        raise UpdateRejected("non-finite gradient")
    b1, b2 = state.beta1, state.beta2
    t = state.step + 1
    m1 = b1 * state.m + (1.0 - b1) * g
    v1 = b2 * state.v + (1.0 - b2) * (g * g)
    new = params.data - learning_rate * (m1 / (1.0 - b1 ** t)) / (
        np.sqrt(v1 / (1.0 - b2 ** t)) + state.eps)
    if not np.isfinite(new).all():
        raise UpdateRejected("update would produce non-finite parameters")
    params.data[...] = new
    state.m[...] = m1
    state.v[...] = v1
    state.step = t
    return params, state


def soft_update(target: NetworkParams, source: NetworkParams, tau: float) -> NetworkParams:
    """Polyak tracking ``target <- tau * source + (1 - tau) * target`` in place."""
    if not target.same_shape(source):
        raise ShapeError("target and source layer sizes differ")
    if not 0.0 <= tau <= 1.0:
        raise ConfigError(f"tau must lie in [0, 1], got {tau}")
    target.data[...] = tau * source.data + (1.0 - tau) * target.data
    return target


def copy_into(target: NetworkParams, source: NetworkParams) -> NetworkParams:
    if not target.same_shape(source):
        raise ShapeError("target and source layer sizes differ")
    target.data[...] = source.data
    return target
