"""Fully connected ReLU classifier with hand-written backpropagation.

Backpropagation starts from an arbitrary logit gradient, so any loss in
:mod:`kdlab.losses` (including gradient-only rules such as the tau -> inf
limit) can drive training directly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .numerics import as_float_array, make_rng

FORMAT_VERSION = 1


class CheckpointFormatError(ValueError):
    def __init__(self, msg, offset=None):
        self.offset = offset
        super().__init__(msg if offset is None else f"{msg} (at offset {offset})")


class UnsupportedVersionError(CheckpointFormatError):
    pass


@dataclass
class Mlp:
    """Layers ``(W, b)`` with ``W`` of shape ``(out, in)``; ReLU between layers.

    ``widths = [d, h_1, ..., h_m, K]``; the last hidden activation is the
    pre-logit ``r`` and the logits are ``W_last @ r + b_last``.
    """

    weights: list
    biases: list

    @property
    def widths(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def num_classes(self):
        return self.weights[-1].shape[0]

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self):
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def __call__(self, x):
        return forward(self, x)[0]


@dataclass
class ForwardCache:
    inputs: list = field(default_factory=list)   # input to each layer
    preacts: list = field(default_factory=list)  # W @ a + b for each hidden layer

    @property
    def prelogits(self):
        return self.inputs[-1]


def init(widths, seed):
    """He-uniform weights in ``±sqrt(6 / fan_in)``, zero biases."""
    widths = [int(w) for w in widths]
    if len(widths) < 3:
        raise ValueError("need input, at least one hidden layer and output widths")
    if min(widths) < 1:
        raise ValueError(f"widths must be positive, got {widths}")
    rng = make_rng(seed, "init")
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases)


def forward(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != net.widths[0]:
        raise ValueError(f"input has {x.shape[1]} features, network expects {net.widths[0]}")
    cache = ForwardCache()
    a = x
    n_layers = len(net.weights)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        cache.inputs.append(a)
        h = a @ w.T + b
        if i < n_layers - 1:
            cache.preacts.append(h)
            a = np.maximum(h, 0.0)
        else:
            a = h
    return a, cache


def backward(net, cache, dl_dz):
    """Parameter gradients of the batch-mean loss whose per-sample logit gradient is ``dl_dz``.

    Returns a list aligned with :meth:`Mlp.params` (``W0, b0, W1, b1, ...``).
    """
    g = np.asarray(dl_dz, dtype=np.float64)
    n = cache.inputs[0].shape[0]
    if g.shape != (n, net.num_classes):
        raise ValueError(f"logit gradient shape {g.shape} does not match batch ({n}, {net.num_classes})")
    g = g / n
    grads = [None] * (2 * len(net.weights))
    for i in range(len(net.weights) - 1, -1, -1):
        a = cache.inputs[i]
        grads[2 * i] = g.T @ a
        grads[2 * i + 1] = np.sum(g, axis=0)
        if i > 0:
            g = (g @ net.weights[i]) * (cache.preacts[i - 1] > 0.0)
    return grads


@dataclass
class SgdState:
    lr: float
    momentum: float = 0.9
    weight_decay: float = 5e-4
    velocity: list | None = None

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be non-negative")


def sgd_step(net, grads, state):
    """``v <- m v + (g + wd w)``, ``w <- w - lr v`` applied in place to every parameter."""
    params = net.params()
    if len(grads) != len(params):
        raise ValueError("gradient list does not match parameters")
    if state.velocity is None:
        state.velocity = [np.zeros_like(p) for p in params]
    for p, g, v in zip(params, grads, state.velocity):
        v *= state.momentum
        v += g + state.weight_decay * p
        p -= state.lr * v


def predict(net, x):
    return np.argmax(net(x), axis=-1)


def accuracy(net, x, y):
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    return float(np.mean(predict(net, x) == y))


def prelogit_dilation_bound(net, r):
    """Cauchy-Schwarz lower bound ``-(1/2K^2) ||r||^2 sum_n (sum_j W_jn)^2``.

    Bounds ``-(1/2K^2) (sum_j z_j)^2`` from below, with ``z = W r`` (final bias excluded).
    """
    r = as_float_array(r, "r")
    w = net.weights[-1]
    k = w.shape[0]
    if k < 2:
        raise ValueError("need at least two classes")
    if r.shape != (w.shape[1],):
        raise ValueError(f"pre-logit length {r.shape} does not match final layer input {w.shape[1]}")
    col_sums = np.sum(w, axis=0)
    return -float(np.dot(r, r) * np.dot(col_sums, col_sums)) / (2.0 * k * k)


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(net):
    doc = {
        "format_version": FORMAT_VERSION,
        "widths": net.widths,
        "layers": [
            {"weights": w.ravel().tolist(), "biases": b.tolist()}
            for w, b in zip(net.weights, net.biases)
        ],
    }
    return json.dumps(doc, separators=(",", ":")).encode()


def load_checkpoint(data):
    if isinstance(data, bytes):
        data = data.decode()
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise CheckpointFormatError(f"malformed checkpoint: {exc.msg}", exc.pos) from None
    if not isinstance(doc, dict):
        raise CheckpointFormatError("checkpoint must be a JSON object", 0)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported checkpoint version {version!r}")
    try:
        widths = [int(w) for w in doc["widths"]]
        layers = doc["layers"]
        if len(layers) != len(widths) - 1:
            raise CheckpointFormatError("layer count does not match widths")
        weights, biases = [], []
        for i, layer in enumerate(layers):
            w = np.array(layer["weights"], dtype=np.float64)
            b = np.array(layer["biases"], dtype=np.float64)
            if w.size != widths[i + 1] * widths[i] or b.shape != (widths[i + 1],):
                raise CheckpointFormatError(f"layer {i} has wrong parameter count")
            weights.append(w.reshape(widths[i + 1], widths[i]))
            biases.append(b)
    except (KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"missing or invalid field: {exc}") from None
    return Mlp(weights, biases)
