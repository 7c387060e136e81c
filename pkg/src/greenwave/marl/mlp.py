"""Small tanh MLP with hand-written reverse-mode gradients (numpy only)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError


@dataclass
class MLP:
    """Affine layers with tanh between them; the last layer is linear.

    ``weights[k]`` has shape ``(fan_in, fan_out)``.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    version: int = field(default=0, compare=False)

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MLP":
        return MLP([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, vec: np.ndarray) -> None:
        k = 0
        for p in self.params():
            p[...] = vec[k:k + p.size].reshape(p.shape)
            k += p.size
        self.version += 1


def init_mlp(sizes: list[int], rng: np.random.Generator, out_scale: float = 1.0) -> MLP:
    """Scaled-normal init: std 1/sqrt(fan_in), last layer multiplied by ``out_scale``."""
    weights, biases = [], []
    for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        w = rng.standard_normal((n_in, n_out)) / np.sqrt(n_in)
        if k == len(sizes) - 2:
            w *= out_scale
        weights.append(w)
        biases.append(np.zeros(n_out))
    return MLP(weights, biases)


@dataclass
class Cache:
    inputs: list  # input of every layer
    outputs: list  # tanh outputs of hidden layers
    version: int
    squeeze: bool


def mlp_forward(net: MLP, x) -> tuple[np.ndarray, Cache]:
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise DimensionError(f"input shape {x.shape} does not match net input {net.in_dim}")
    inputs, outputs = [], []
    h = x
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        z = h @ w + b
        if k < last:
            h = np.tanh(z)
            outputs.append(h)
        else:
            h = z
    out = h[0] if squeeze else h
    return out, Cache(inputs, outputs, net.version, squeeze)


def mlp_backward(net: MLP, cache: Cache, grad_out) -> list[np.ndarray]:
    """Gradients ``[dW0, db0, dW1, db1, ...]`` of ``sum(grad_out * output)``."""
    if cache.version != net.version:
        raise RuntimeError("stale forward cache: parameters changed since the forward pass")
    g = np.asarray(grad_out, dtype=float)
    if cache.squeeze:
        g = g[None, :]
    grads = [None] * (2 * len(net.weights))
    for k in range(len(net.weights) - 1, -1, -1):
        h_in = cache.inputs[k]
        grads[2 * k] = h_in.T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        if k > 0:
            g = (g @ net.weights[k].T) * (1.0 - cache.outputs[k - 1] ** 2)
    return grads


def grad_norm(grads: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def sgd_step(net: MLP, grads: list[np.ndarray], lr: float, max_norm: float | None = None) -> float:
    """In-place gradient descent with optional global-norm clipping; returns the raw norm."""
    norm = grad_norm(grads)
    scale = lr
    if max_norm is not None and np.isfinite(max_norm) and norm > max_norm:
        scale = lr * max_norm / (norm + 1e-12)
    for p, g in zip(net.params(), grads):
        p -= scale * g
    net.version += 1
    return norm
