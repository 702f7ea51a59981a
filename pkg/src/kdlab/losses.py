"""Distillation losses and their gradients with respect to the student logits.

All functions take logits with classes on the last axis and return per-sample
values (losses) or arrays of the logit shape (gradients). ``z_s`` is the
student, ``z_t`` the teacher.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .numerics import (
    DegenerateInputError,
    _check_tau,
    as_float_array,
    log_softmax,
    onehot,
    softened_softmax,
)


class LossKind(str, enum.Enum):
    CE = "ce"
    KL = "kl"
    RESCALED_KL = "rescaled_kl"
    KL_INF = "kl_inf"
    LABEL_MATCH = "label_match"
    MSE = "mse"

    @property
    def needs_tau(self):
        return self in (LossKind.KL, LossKind.RESCALED_KL)


@dataclass(frozen=True)
class DistillObjective:
    """``(1 - alpha) * CE + alpha * <distillation term selected by kind>``."""

    alpha: float = 0.0
    kind: LossKind = LossKind.CE
    tau: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.kind.needs_tau:
            if self.tau is None:
                raise ValueError(f"{self.kind.value} requires a temperature")
            _check_tau(self.tau)
        elif self.tau is not None:
            raise ValueError(f"{self.kind.value} takes no temperature")
        if self.kind is LossKind.CE and self.alpha != 0.0:
            raise ValueError("CE-only objective must have alpha = 0")

    @property
    def uses_teacher(self):
        return self.kind is not LossKind.CE and self.alpha > 0.0

    def label(self):
        if self.kind.needs_tau:
            return f"{self.kind.value}(tau={self.tau:g})"
        return self.kind.value


def _pair(z_s, z_t):
    z_s = as_float_array(z_s, "z_s")
    z_t = as_float_array(z_t, "z_t")
    if z_s.shape != z_t.shape:
        raise ValueError(f"logit shape mismatch: {z_s.shape} vs {z_t.shape}")
    return z_s, z_t


def _labels(y, z):
    y = np.asarray(y, dtype=np.int64)
    k = z.shape[-1]
    if y.shape != z.shape[:-1]:
        raise ValueError(f"label shape {y.shape} does not match logits {z.shape}")
    if np.any((y < 0) | (y >= k)):
        raise ValueError(f"label out of range [0, {k})")
    return y


# -- cross-entropy -----------------------------------------------------------

def ce_loss(p, y):
    """``-log p[y]``; returns ``inf`` when ``p[y] == 0``."""
    p = as_float_array(p, "p")
    y = _labels(y, p)
    py = np.take_along_axis(p, y[..., None], axis=-1)[..., 0]
    with np.errstate(divide="ignore"):
        return -np.log(py)


def ce_loss_from_logits(z, y):
    z = as_float_array(z, "z")
    y = _labels(y, z)
    return -np.take_along_axis(log_softmax(z, 1.0), y[..., None], axis=-1)[..., 0]


def ce_grad(z, y):
    z = as_float_array(z, "z")
    y = _labels(y, z)
    return softened_softmax(z, 1.0) - onehot(y, z.shape[-1])


# -- temperature-scaled KL ---------------------------------------------------

def _kl(z_s, z_t, tau):
    """Plain ``KL(p_t(tau) || p_s(tau))`` without any temperature factor."""
    log_pt = log_softmax(z_t, tau)
    log_ps = log_softmax(z_s, tau)
    pt = np.exp(log_pt)
    terms = np.where(pt > 0.0, pt * (log_pt - log_ps), 0.0)
    return np.maximum(np.sum(terms, axis=-1), 0.0)


def kl_loss(z_s, z_t, tau):
    z_s, z_t = _pair(z_s, z_t)
    tau = _check_tau(tau)
    return tau * tau * _kl(z_s, z_t, tau)


def kl_grad(z_s, z_t, tau):
    z_s, z_t = _pair(z_s, z_t)
    tau = _check_tau(tau)
    return tau * (softened_softmax(z_s, tau) - softened_softmax(z_t, tau))


def rescale_factor(tau):
    """``max(tau, tau**2)``: the usual ``tau**2`` above 1, ``tau`` below."""
    tau = _check_tau(tau)
    return max(tau, tau * tau)


def rescaled_kl_loss(z_s, z_t, tau):
    z_s, z_t = _pair(z_s, z_t)
    return rescale_factor(tau) * _kl(z_s, z_t, tau)


def rescaled_kl_grad(z_s, z_t, tau):
    z_s, z_t = _pair(z_s, z_t)
    tau = _check_tau(tau)
    return (rescale_factor(tau) / tau) * (softened_softmax(z_s, tau) - softened_softmax(z_t, tau))


def kl_grad_large_tau_approx(z_s, z_t, tau):
    """KL gradient with ``exp(z / tau)`` replaced by ``1 + z / tau``."""
    z_s, z_t = _pair(z_s, z_t)
    tau = _check_tau(tau)
    k = z_s.shape[-1]
    den_s = k + np.sum(z_s, axis=-1, keepdims=True) / tau
    den_t = k + np.sum(z_t, axis=-1, keepdims=True) / tau
    if np.any(den_s == 0.0) or np.any(den_t == 0.0):
        raise DegenerateInputError("K + sum(z)/tau vanishes; approximation undefined")
    return tau * ((1.0 + z_s / tau) / den_s - (1.0 + z_t / tau) / den_t)


# -- the two limits ----------------------------------------------------------

def kl_grad_inf(z_s, z_t):
    """Limit of the KL gradient as ``tau -> inf``.

    ``(z_s - z_t) / K - sum(z_s - z_t) / K**2``; a zero-sum vector, so it never
    moves the student's logit sum.
    """
    z_s, z_t = _pair(z_s, z_t)
    k = z_s.shape[-1]
    d = z_s - z_t
    return d / k - np.sum(d, axis=-1, keepdims=True) / (k * k)


def label_match_grad(z_s, z_t):
    """Limit of ``kl_grad / tau`` as ``tau -> 0``: onehot(argmax z_s) - onehot(argmax z_t).

    Ties resolve to the lowest index.
    """
    z_s, z_t = _pair(z_s, z_t)
    k = z_s.shape[-1]
    return onehot(np.argmax(z_s, axis=-1), k) - onehot(np.argmax(z_t, axis=-1), k)


def label_match_loss(z_s, z_t):
    # max(z_s) - z_s[argmax z_t]: limit of tau * KL as tau -> 0; gradient is label_match_grad.
    z_s, z_t = _pair(z_s, z_t)
    kt = np.argmax(z_t, axis=-1)
    return np.max(z_s, axis=-1) - np.take_along_axis(z_s, kt[..., None], axis=-1)[..., 0]


# -- direct logit matching ---------------------------------------------------

def mse_loss(z_s, z_t):
    z_s, z_t = _pair(z_s, z_t)
    return np.sum(np.square(z_s - z_t), axis=-1)


def mse_grad(z_s, z_t):
    z_s, z_t = _pair(z_s, z_t)
    return 2.0 * (z_s - z_t)


def delta_inf(z_s, z_t):
    """``-(sum z_s - sum z_t)**2 / (2 K**2)``, the additive constant dropped."""
    z_s, z_t = _pair(z_s, z_t)
    k = z_s.shape[-1]
    gap = np.sum(z_s, axis=-1) - np.sum(z_t, axis=-1)
    return -gap * gap / (2.0 * k * k)


def delta_inf_grad(z_s, z_t):
    z_s, z_t = _pair(z_s, z_t)
    k = z_s.shape[-1]
    gap = np.sum(z_s, axis=-1, keepdims=True) - np.sum(z_t, axis=-1, keepdims=True)
    return np.broadcast_to(-gap / (k * k), z_s.shape).copy()


def kl_inf_surrogate_loss(z_s, z_t):
    """``mse / (2K) + delta_inf``: the large-tau KL up to a constant."""
    z_s, z_t = _pair(z_s, z_t)
    k = z_s.shape[-1]
    return mse_loss(z_s, z_t) / (2.0 * k) + delta_inf(z_s, z_t)


def inf_grad_bound(z_s, z_t):
    """Componentwise bound ``|K z_s - sum z_s|/K**2 + |K z_t - sum z_t|/K**2``."""
    z_s, z_t = _pair(z_s, z_t)
    k = z_s.shape[-1]
    bs = np.abs(k * z_s - np.sum(z_s, axis=-1, keepdims=True)) / (k * k)
    bt = np.abs(k * z_t - np.sum(z_t, axis=-1, keepdims=True)) / (k * k)
    return bs + bt


def label_smooth_targets(y_index, beta, k):
    if k < 2:
        raise ValueError("label smoothing needs K >= 2")
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    out = np.full(k, beta / (k - 1))
    out[y_index] = 1.0 - beta
    return out


# -- combined objective ------------------------------------------------------

def distill_term_loss(z_s, z_t, kind, tau=None):
    kind = LossKind(kind)
    if kind is LossKind.KL:
        return kl_loss(z_s, z_t, tau)
    if kind is LossKind.RESCALED_KL:
        return rescaled_kl_loss(z_s, z_t, tau)
    if kind is LossKind.KL_INF:
        return kl_inf_surrogate_loss(z_s, z_t)
    if kind is LossKind.LABEL_MATCH:
        return label_match_loss(z_s, z_t)
    if kind is LossKind.MSE:
        return mse_loss(z_s, z_t)
    raise ValueError(f"{kind.value} has no distillation term")


def distill_term_grad(z_s, z_t, kind, tau=None):
    kind = LossKind(kind)
    if kind is LossKind.KL:
        return kl_grad(z_s, z_t, tau)
    if kind is LossKind.RESCALED_KL:
        return rescaled_kl_grad(z_s, z_t, tau)
    if kind is LossKind.KL_INF:
        return kl_grad_inf(z_s, z_t)
    if kind is LossKind.LABEL_MATCH:
        return label_match_grad(z_s, z_t)
    if kind is LossKind.MSE:
        return mse_grad(z_s, z_t)
    raise ValueError(f"{kind.value} has no distillation term")


def _check_teacher(z_t, obj):
    if obj.uses_teacher and z_t is None:
        raise ValueError(f"objective {obj.label()} with alpha={obj.alpha} needs teacher logits")


def combined_loss(z_s, z_t, y, obj):
    """Per-sample value of the combined objective (logging surrogate for kl_inf)."""
    _check_teacher(z_t, obj)
    out = (1.0 - obj.alpha) * ce_loss_from_logits(z_s, y)
    if obj.uses_teacher:
        out = out + obj.alpha * distill_term_loss(z_s, z_t, obj.kind, obj.tau)
    return out


def combined_grad(z_s, z_t, y, obj):
    _check_teacher(z_t, obj)
    g = (1.0 - obj.alpha) * ce_grad(z_s, y)
    if obj.uses_teacher:
        g = g + obj.alpha * distill_term_grad(z_s, z_t, obj.kind, obj.tau)
    return g
