"""Dense regressor from observation grids to {goal direction, normalized speed}.

Outputs are squashed, not clipped: the two direction components go through
tanh (range [-1, 1]) and the speed through a logistic sigmoid (range
[0, 1]), so the bounds hold for any weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from racenav.errors import DivergenceError, ShapeError

CHECKPOINT_VERSION = 1
DEFAULT_GAMMA = 0.1


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


_ACTIVATIONS = {
    "tanh": (np.tanh, lambda a, h: 1.0 - h * h),
    "relu": (lambda a: np.maximum(a, 0.0), lambda a, h: (a > 0.0).astype(a.dtype)),
}


class RegressorNet:
    def __init__(self, layer_sizes=(768, 64, 32, 3), activation="tanh", seed=0,
                 weights=None, biases=None):
        self.layer_sizes = tuple(int(n) for n in layer_sizes)
        if self.layer_sizes[-1] != 3:
            raise ShapeError("the output layer must have 3 units (x, y, speed)")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation
        if weights is None:
            rng = np.random.default_rng(seed)
            weights, biases = [], []
            for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
                std = math.sqrt(2.0 / (n_in + n_out))
                weights.append(rng.normal(0.0, std, size=(n_in, n_out)))
                biases.append(np.zeros(n_out))
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]

    @property
    def n_inputs(self):
        return self.layer_sizes[0]

    def copy(self):
        return RegressorNet(self.layer_sizes, self.activation, weights=self.weights,
                            biases=self.biases)

    def zero_(self):
        for w in self.weights:
            w[:] = 0.0
        for b in self.biases:
            b[:] = 0.0
        return self

    # -- forward / backward ----------------------------------------------
    def _flatten(self, obs):
        x = np.asarray(obs, dtype=np.float64)
        single = x.ndim <= 2 and x.size == self.n_inputs
        x = x.reshape(1, -1) if single else x.reshape(x.shape[0], -1)
        if x.shape[1] != self.n_inputs:
            raise ShapeError(f"expected {self.n_inputs} inputs, got {x.shape[1]}")
        return x, single

    def _forward(self, x):
        act, _ = _ACTIVATIONS[self.activation]
        pre, post = [], [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = h @ w + b
            pre.append(a)
            if i < last:
                h = act(a)
                post.append(h)
        z = pre[-1]
        return np.tanh(z[:, :2]), _sigmoid(z[:, 2]), pre, post

    def forward_batch(self, obs):
        x, _ = self._flatten(obs)
        xy, v, _, _ = self._forward(x)
        return xy, v

    def predict(self, obs):
        """Single observation -> (x in [-1, 1]^2, v in [0, 1])."""
        x, _ = self._flatten(obs)
        xy, v, _, _ = self._forward(x)
        return xy[0], float(v[0])

    __call__ = predict

    def loss_and_grad(self, obs, x_g, v_g, gamma=DEFAULT_GAMMA):
        """Batch-mean loss and its gradients (lists matching weights/biases)."""
        x, _ = self._flatten(obs)
        x_g = np.asarray(x_g, dtype=np.float64).reshape(-1, 2)
        v_g = np.asarray(v_g, dtype=np.float64).reshape(-1)
        xy, v, pre, post = self._forward(x)
        n = x.shape[0]
        ex, ev = xy - x_g, v - v_g
        loss = float(np.mean(np.sum(ex * ex, axis=1) + gamma * ev * ev))

        dz = np.empty((n, 3))
        dz[:, :2] = 2.0 * ex * (1.0 - xy * xy) / n
        dz[:, 2] = 2.0 * gamma * ev * v * (1.0 - v) / n
        _, dact = _ACTIVATIONS[self.activation]
        gw = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        delta = dz
        for i in range(len(self.weights) - 1, -1, -1):
            gw[i] = post[i].T @ delta
            gb[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * dact(pre[i - 1], post[i])
        return loss, gw, gb

    # -- persistence ------------------------------------------------------
    def save(self, path):
        arrays = {"format_version": np.array(CHECKPOINT_VERSION),
                  "layer_sizes": np.array(self.layer_sizes),
                  "activation": np.array(self.activation)}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"W{i}"] = w
            arrays[f"b{i}"] = b
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path):
        with np.load(Path(path), allow_pickle=False) as z:
            version = int(z["format_version"])
            if version != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {version}")
            sizes = tuple(int(n) for n in z["layer_sizes"])
            n = len(sizes) - 1
            return cls(sizes, str(z["activation"]),
                       weights=[z[f"W{i}"] for i in range(n)],
                       biases=[z[f"b{i}"] for i in range(n)])


def loss(pred, label, gamma=DEFAULT_GAMMA):
    """Weighted squared error ``|x - x_g|^2 + gamma (v - v_g)^2``.

    ``pred`` is an ``(x, v)`` pair; ``label`` an ExpertLabel or ``(x_g, v_g)``.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    x, v = pred
    if hasattr(label, "x_g"):
        x_g, v_g = label.x_g, label.v_g
    else:
        x_g, v_g = label
    e = np.asarray(x, dtype=np.float64) - np.asarray(x_g, dtype=np.float64)
    return float(e @ e + gamma * (v - v_g) ** 2)


@dataclass
class TrainResult:
    net: RegressorNet
    losses: list


def train(net: RegressorNet, data, epochs=10, lr=0.01, seed=0, gamma=DEFAULT_GAMMA,
          batch_size=64, momentum=0.9) -> TrainResult:
    """Minibatch SGD with momentum on the weighted loss; returns a new net.

    ``data`` is a Dataset. ``losses`` holds the mean training loss of each
    epoch. A non-finite loss or weight raises DivergenceError.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    out = net.copy()
    if epochs == 0:
        return TrainResult(out, [])
    rng = np.random.default_rng(seed)
    X = data.obs.reshape(len(data), -1)
    Xg, Vg = data.x_g, data.v_g
    vel_w = [np.zeros_like(w) for w in out.weights]
    vel_b = [np.zeros_like(b) for b in out.biases]
    losses = []
    for _ in range(epochs):
        perm = rng.permutation(len(data))
        total = 0.0
        for start in range(0, len(perm), batch_size):
            idx = perm[start:start + batch_size]
            batch_loss, gw, gb = out.loss_and_grad(X[idx], Xg[idx], Vg[idx], gamma)
            if not math.isfinite(batch_loss):
                raise DivergenceError("non-finite training loss; lower the learning rate")
            total += batch_loss * len(idx)
            for i in range(len(out.weights)):
                vel_w[i] = momentum * vel_w[i] - lr * gw[i]
                vel_b[i] = momentum * vel_b[i] - lr * gb[i]
                out.weights[i] += vel_w[i]
                out.biases[i] += vel_b[i]
        # squashed outputs keep the loss bounded, so also watch the weights
        if not all(np.isfinite(w).all() for w in out.weights + out.biases):
            raise DivergenceError("non-finite weights; lower the learning rate")
        losses.append(total / len(perm))
    return TrainResult(out, losses)


def evaluate(net: RegressorNet, data, gamma=DEFAULT_GAMMA, batch_size=4096) -> float:
    """Mean loss of ``net`` over ``data``."""
    total = 0.0
    X = data.obs.reshape(len(data), -1)
    for start in range(0, len(data), batch_size):
        sl = slice(start, start + batch_size)
        xy, v = net.forward_batch(X[sl])
        e = xy - data.x_g[sl]
        total += float(np.sum(np.sum(e * e, axis=1) + gamma * (v - data.v_g[sl]) ** 2))
    return total / len(data)
