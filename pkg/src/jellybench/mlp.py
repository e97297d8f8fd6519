"""Small dense-network toolkit in numpy: forward, hand-derived backprop, Adam.

A network is a list of :class:`Dense` layers. Losses are softmax
cross-entropy (integer targets) or mean squared error (real targets).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch, self.batch = epoch, batch


@dataclass
class Dense:
    W: np.ndarray
    b: np.ndarray
    activation: str = "relu"  # "relu" or "linear"

    @classmethod
    def init(cls, n_in: int, n_out: int, rng: np.random.Generator, activation: str = "relu") -> "Dense":
        # He-uniform for ReLU layers, Glorot-uniform otherwise
        limit = np.sqrt(6.0 / n_in) if activation == "relu" else np.sqrt(6.0 / (n_in + n_out))
        return cls(rng.uniform(-limit, limit, size=(n_in, n_out)), np.zeros(n_out), activation)

    def copy(self) -> "Dense":
        return Dense(self.W.copy(), self.b.copy(), self.activation)


def build(sizes: list[int], rng: np.random.Generator, hidden: str = "relu", last: str = "linear") -> list[Dense]:
    return [
        Dense.init(a, b, rng, last if i == len(sizes) - 2 else hidden)
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))
    ]


def forward(layers: list[Dense], X: np.ndarray) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Return the output of the last layer (pre-softmax) and per-layer (input, pre-activation) caches."""
    caches = []
    h = X
    for layer in layers:
        z = h @ layer.W + layer.b
        caches.append((h, z))
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return h, caches


def backward(layers: list[Dense], caches, dout: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients (dW, db) per layer given dL/d(output)."""
    grads = [None] * len(layers)
    g = dout
    for i in range(len(layers) - 1, -1, -1):
        h_in, z = caches[i]
        if layers[i].activation == "relu":
            g = g * (z > 0)
        grads[i] = (h_in.T @ g, g.sum(axis=0))
        g = g @ layers[i].W.T
    return grads


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(layers: list[Dense], X: np.ndarray, y: np.ndarray):
    """Mean softmax cross-entropy and its parameter gradients."""
    z, caches = forward(layers, X)
    p = softmax(z)
    n = len(y)
    loss = -np.mean(np.log(np.clip(p[np.arange(n), y], 1e-300, None)))
    dz = p.copy()
    dz[np.arange(n), y] -= 1.0
    return float(loss), backward(layers, caches, dz / n)


def mean_squared(layers: list[Dense], X: np.ndarray, target: np.ndarray):
    """Mean over all entries of the squared error, and its parameter gradients."""
    out, caches = forward(layers, X)
    diff = out - target
    return float(np.mean(diff**2)), backward(layers, caches, 2.0 * diff / diff.size)


class Adam:
    def __init__(self, layers: list[Dense], lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        params = [p for l in layers for p in (l.W, l.b)]
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, layers: list[Dense], grads) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        params = [p for l in layers for p in (l.W, l.b)]
        flat = [g for pair in grads for g in pair]
        for i, (param, g) in enumerate(zip(params, flat)):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            param -= self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)


LossFn = Callable[[list[Dense], np.ndarray, np.ndarray], tuple[float, list]]


def train(layers: list[Dense], X: np.ndarray, target: np.ndarray, loss_fn: LossFn, epochs: int,
          batch_size: int, lr: float, rng: np.random.Generator,
          trainable: slice | None = None) -> list[float]:
    """Minibatch Adam. Returns the mean training loss per epoch.

    ``trainable`` restricts updates to a slice of ``layers``; gradients still
    flow through the frozen layers.
    """
    sel = trainable or slice(None)
    opt = Adam(layers[sel], lr)
    n = len(X)
    history = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for b, lo in enumerate(range(0, n, batch_size)):
            idx = order[lo:lo + batch_size]
            loss, grads = loss_fn(layers, X[idx], target[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, b, loss)
            opt.step(layers[sel], grads[sel])
            total += loss * len(idx)
        history.append(total / n)
    return history
