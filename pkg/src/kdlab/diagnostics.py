"""Measurements on trained models: TLD, entropy, PCC, ECE, logit/pre-logit statistics,
class templates and their 2-D projection."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .numerics import DegenerateInputError, as_float_array, l2_norm, softened_softmax
from .network import forward


def tld(z, true_idx):
    """Top logit difference: ``z[true] - max_{k != true} z[k]``.

    Works row-wise on a batch when ``true_idx`` is an array.
    """
    z = as_float_array(z, "z")
    k = z.shape[-1]
    if k < 2:
        raise ValueError("TLD needs at least two classes")
    t = np.asarray(true_idx, dtype=np.int64)
    if np.any((t < 0) | (t >= k)):
        raise ValueError("true index out of range")
    zt = np.take_along_axis(z, t[..., None], axis=-1)
    others = z.copy()
    np.put_along_axis(others, t[..., None], -np.inf, axis=-1)
    return (zt - np.max(others, axis=-1, keepdims=True))[..., 0]


def entropy(p):
    p = as_float_array(p, "p")
    if np.any(p < 0) or np.any(np.abs(np.sum(p, axis=-1) - 1.0) > 1e-9):
        raise ValueError("not a probability distribution")
    terms = np.where(p > 0, -p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return np.sum(terms, axis=-1)


def pcc(a, b):
    """Sample Pearson correlation (two-pass, centred)."""
    a = as_float_array(a, "a").ravel()
    b = as_float_array(b, "b").ravel()
    if a.shape != b.shape or a.size < 2:
        raise ValueError("pcc needs two equal-length arrays with at least 2 entries")
    da = a - a.mean()
    db = b - b.mean()
    sa = np.sqrt(np.dot(da, da))
    sb = np.sqrt(np.dot(db, db))
    if sa == 0.0 or sb == 0.0:
        raise DegenerateInputError("correlation undefined for constant input")
    return float(np.clip(np.dot(da, db) / (sa * sb), -1.0, 1.0))


@dataclass(frozen=True)
class ReliabilityBins:
    edges: np.ndarray       # length n_bins + 1
    counts: np.ndarray
    mean_confidence: np.ndarray  # nan for empty bins
    accuracy: np.ndarray         # nan for empty bins

    @property
    def n_bins(self):
        return self.counts.size


def reliability_bins(confidence, correct, n_bins=10):
    """Equal-width bins ``[0, 1/B], (1/B, 2/B], ..., ((B-1)/B, 1]``."""
    conf = as_float_array(confidence, "confidence").ravel()
    corr = np.asarray(correct, dtype=np.float64).ravel()
    if conf.size == 0:
        raise ValueError("calibration of an empty set is undefined")
    if conf.shape != corr.shape:
        raise ValueError("confidence and correctness lengths differ")
    if np.any((conf < 0) | (conf > 1)):
        raise ValueError("confidences must lie in [0, 1]")
    idx = np.clip(np.ceil(conf * n_bins).astype(np.int64) - 1, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    with np.errstate(invalid="ignore"):
        mean_conf = np.bincount(idx, weights=conf, minlength=n_bins) / counts
        acc = np.bincount(idx, weights=corr, minlength=n_bins) / counts
    return ReliabilityBins(np.linspace(0.0, 1.0, n_bins + 1), counts, mean_conf, acc)


def ece(confidence, correct, n_bins=10):
    """Expected calibration error and its reliability bins."""
    bins = reliability_bins(confidence, correct, n_bins)
    n = bins.counts.sum()
    filled = bins.counts > 0
    gaps = np.abs(bins.accuracy[filled] - bins.mean_confidence[filled])
    return float(np.sum(bins.counts[filled] / n * gaps)), bins


def model_calibration(net, x, y, n_bins=10):
    """ECE of a network; confidence is the top softmax probability at tau = 1."""
    z = net(x)
    p = softened_softmax(z, 1.0)
    return ece(np.max(p, axis=-1), np.argmax(z, axis=-1) == np.asarray(y), n_bins)


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray


def histogram(values, bins=50):
    """Histogram over ``[min, max]``; constant data collapse to a single bin."""
    v = as_float_array(values, "values").ravel()
    if v.size == 0:
        return Histogram(np.array([0.0, 0.0]), np.array([0], dtype=np.int64))
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        return Histogram(np.array([lo, hi]), np.array([v.size], dtype=np.int64))
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    return Histogram(edges, counts.astype(np.int64))


def logit_sum_stats(net, x, bins=50):
    values = np.abs(np.sum(net(x), axis=-1))
    return values, histogram(values, bins)


def logit_distance_stats(student, teacher, x, bins=50):
    zs, zt = student(x), teacher(x)
    if zs.shape != zt.shape:
        raise ValueError("student and teacher class counts differ")
    values = l2_norm(zs - zt)
    return values, histogram(values, bins)


def prelogits(net, x):
    return forward(net, x)[1].prelogits


def prelogit_norm_stats(net, x, bins=50):
    values = l2_norm(prelogits(net, x))
    return values, histogram(values, bins)


def tld_distribution(net, x, y, bins=50):
    values = tld(net(x), y)
    return values, histogram(values, bins)


def entropy_values(net, x):
    return entropy(softened_softmax(net(x), 1.0))


def class_templates(net, x, y, class_ids):
    """Mean pre-logit of each requested class."""
    r = prelogits(net, x)
    y = np.asarray(y)
    out = []
    for c in class_ids:
        mask = y == c
        if not np.any(mask):
            raise ValueError(f"class {c} has no samples")
        out.append(r[mask].mean(axis=0))
    return np.array(out)


@dataclass(frozen=True)
class ProjectionBasis:
    origin: np.ndarray
    basis: np.ndarray  # (2, d), orthonormal rows
    templates: np.ndarray


def projection_basis(templates, tol=1e-12):
    """Gram-Schmidt of ``(t2 - t1, t3 - t1)``; the plane's origin is ``t1``."""
    t = as_float_array(templates, "templates")
    if t.shape[0] != 3:
        raise ValueError("need exactly three templates")
    u = t[1] - t[0]
    v = t[2] - t[0]
    nu = np.linalg.norm(u)
    if nu <= tol:
        raise DegenerateInputError("templates are collinear")
    e1 = u / nu
    w = v - np.dot(v, e1) * e1
    # second pass restores orthogonality lost to cancellation
    w = w - np.dot(w, e1) * e1
    nw = np.linalg.norm(w)
    if nw <= tol * max(1.0, np.linalg.norm(v)):
        raise DegenerateInputError("templates are collinear")
    return ProjectionBasis(t[0].copy(), np.stack([e1, w / nw]), t)


def project(basis, r):
    r = as_float_array(r, "r")
    return (r - basis.origin) @ basis.basis.T


def write_values_csv(path, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value"])
        for v in np.ravel(values):
            w.writerow([repr(float(v))])


def write_histogram_csv(path, hist):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "count"])
        for lo, hi, c in zip(hist.edges[:-1], hist.edges[1:], hist.counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
