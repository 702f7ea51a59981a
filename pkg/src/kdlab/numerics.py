"""Dense linear algebra helpers, stable softened softmax and seeded randomness.

Every array in the package is ``float64``. Softmax-style functions operate on
the last axis, so a single logit vector and a batch of logit rows share one
code path.
"""
from __future__ import annotations

import hashlib

import numpy as np


class DegenerateInputError(ValueError):
    """Input is well-formed but the requested quantity is undefined for it."""


def as_float_array(x, name="x"):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _check_tau(tau):
    if not (isinstance(tau, (int, float, np.floating, np.integer)) and tau > 0 and np.isfinite(tau)):
        raise ValueError(f"temperature must be a positive finite real, got {tau!r}")
    return float(tau)


def softened_softmax(z, tau=1.0):
    """Softmax of ``z / tau`` along the last axis.

    The maximum of ``z / tau`` is subtracted before exponentiation; this is
    exact because softmax is invariant to adding a constant to every logit.
    """
    tau = _check_tau(tau)
    s = as_float_array(z, "z") / tau
    s = s - np.max(s, axis=-1, keepdims=True)
    e = np.exp(s)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(z, tau=1.0):
    """Log of :func:`softened_softmax` via log-sum-exp."""
    tau = _check_tau(tau)
    s = as_float_array(z, "z") / tau
    s = s - np.max(s, axis=-1, keepdims=True)
    return s - np.log(np.sum(np.exp(s), axis=-1, keepdims=True))


def matmul(a, b):
    """Matrix product with an explicit shape check (raises ``ValueError``)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def l2_norm(x, axis=-1):
    return np.sqrt(np.sum(np.square(np.asarray(x, dtype=np.float64)), axis=axis))


def onehot(index, k):
    index = np.asarray(index, dtype=np.int64)
    out = np.zeros(index.shape + (k,))
    np.put_along_axis(out, index[..., None], 1.0, axis=-1)
    return out


def derive_seed(seed, *keys):
    """Combine a base seed with a key path into an independent 64-bit seed.

    The result is ``seed XOR blake2b(keys)``, so sibling keys (e.g. grid cells)
    get unrelated streams while staying reproducible.
    """
    h = hashlib.blake2b(repr(tuple(keys)).encode(), digest_size=8)
    return (int(seed) ^ int.from_bytes(h.digest(), "little")) & 0xFFFFFFFFFFFFFFFF


def make_rng(seed, *keys):
    """Seeded ``numpy.random.Generator``; ``keys`` select a sub-stream."""
    if keys:
        seed = derive_seed(seed, *keys)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
