"""Synthetic Gaussian-mixture data, symmetric label noise, splits and CSV I/O."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .numerics import make_rng

CENTER_RADIUS = 3.0
# Fixed seed for class-center directions: centers depend only on (K, d).
_CENTER_SEED = 0x5EED_CE17


class DatasetFormatError(ValueError):
    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(msg if line is None else f"line {line}: {msg}")


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    labels: np.ndarray
    num_classes: int
    clean_labels: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError("x must be a non-empty 2-D array")
        if labels.shape != (x.shape[0],):
            raise ValueError("labels must have one entry per row of x")
        if np.any((labels < 0) | (labels >= self.num_classes)):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "labels", labels)
        if self.clean_labels is not None:
            clean = np.asarray(self.clean_labels, dtype=np.int64)
            if clean.shape != labels.shape:
                raise ValueError("clean_labels must match labels in length")
            object.__setattr__(self, "clean_labels", clean)

    def __len__(self):
        return self.x.shape[0]

    @property
    def dim(self):
        return self.x.shape[1]

    @property
    def true_labels(self):
        """Clean labels if noise was injected, else the labels themselves."""
        return self.labels if self.clean_labels is None else self.clean_labels

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        clean = None if self.clean_labels is None else self.clean_labels[idx]
        return Dataset(self.x[idx], self.labels[idx], self.num_classes, clean)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        same_clean = (self.clean_labels is None) == (other.clean_labels is None) and (
            self.clean_labels is None or np.array_equal(self.clean_labels, other.clean_labels)
        )
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.labels, other.labels)
            and same_clean
        )


def class_centers(k, d):
    """Unit directions scaled by ``CENTER_RADIUS``; orthonormal when ``k <= d``."""
    rng = make_rng(_CENTER_SEED, k, d)
    if k <= d:
        q, _ = np.linalg.qr(rng.standard_normal((d, k)))
        dirs = q.T
    else:
        dirs = rng.standard_normal((k, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return CENTER_RADIUS * dirs


def gen_gaussian_mixture(k, d, n_per_class, spread, seed):
    if k < 2 or d < 2 or n_per_class < 1:
        raise ValueError("need K >= 2, d >= 2 and n_per_class >= 1")
    if spread < 0:
        raise ValueError("spread must be non-negative")
    centers = class_centers(k, d)
    labels = np.repeat(np.arange(k), n_per_class)
    rng = make_rng(seed, "gaussian_mixture")
    x = centers[labels] + spread * rng.standard_normal((labels.size, d))
    return Dataset(x, labels, k)


def inject_symmetric_noise(ds, fraction, seed):
    """Flip exactly ``round(fraction * N)`` labels, each to a uniformly drawn *other* class."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"noise fraction must lie in [0, 1], got {fraction}")
    clean = ds.true_labels.copy()
    n = len(ds)
    n_flip = int(round(fraction * n))
    rng = make_rng(seed, "label_noise")
    idx = rng.choice(n, size=n_flip, replace=False)
    # offset in [1, K-1] never maps a label onto itself
    offsets = rng.integers(1, ds.num_classes, size=n_flip)
    noisy = clean.copy()
    noisy[idx] = (clean[idx] + offsets) % ds.num_classes
    return Dataset(ds.x, noisy, ds.num_classes, clean)


def split(ds, test_fraction, seed):
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    n = len(ds)
    n_test = int(round(test_fraction * n))
    if n_test == 0 or n_test == n:
        raise ValueError(f"test_fraction {test_fraction} leaves an empty side for N={n}")
    perm = make_rng(seed, "split").permutation(n)
    return ds.subset(np.sort(perm[n_test:])), ds.subset(np.sort(perm[:n_test]))


def save_csv(ds, path):
    header = [f"f{i}" for i in range(ds.dim)] + ["label"]
    if ds.clean_labels is not None:
        header.append("clean_label")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(ds)):
            row = [repr(float(v)) for v in ds.x[i]] + [str(int(ds.labels[i]))]
            if ds.clean_labels is not None:
                row.append(str(int(ds.clean_labels[i])))
            w.writerow(row)


def load_csv(path, num_classes=None):
    """Read a dataset CSV; ``num_classes`` defaults to ``max(label) + 1``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetFormatError("empty file", 1)
    header = rows[0]
    if "label" not in header:
        raise DatasetFormatError("missing 'label' column", 1)
    n_feat = header.index("label")
    expected = [f"f{i}" for i in range(n_feat)]
    if header[:n_feat] != expected or n_feat < 1:
        raise DatasetFormatError("feature columns must be f0, f1, ... before 'label'", 1)
    tail = header[n_feat + 1:]
    if tail not in ([], ["clean_label"]):
        raise DatasetFormatError(f"unexpected trailing columns {tail}", 1)
    has_clean = bool(tail)
    if len(rows) < 2:
        raise DatasetFormatError("no data rows", 2)
    x = np.empty((len(rows) - 1, n_feat))
    labels = np.empty(len(rows) - 1, dtype=np.int64)
    clean = np.empty(len(rows) - 1, dtype=np.int64) if has_clean else None
    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != len(header):
            raise DatasetFormatError(f"expected {len(header)} fields, got {len(row)}", line)
        try:
            x[i] = [float(v) for v in row[:n_feat]]
            labels[i] = int(row[n_feat])
            if has_clean:
                clean[i] = int(row[n_feat + 1])
        except ValueError as exc:
            raise DatasetFormatError(str(exc), line) from None
        if not np.all(np.isfinite(x[i])):
            raise DatasetFormatError("non-finite feature", line)
        if labels[i] < 0 or (has_clean and clean[i] < 0):
            raise DatasetFormatError("negative label", line)
    k = num_classes
    if k is None:
        k = int(max(labels.max(), clean.max() if has_clean else 0)) + 1
    return Dataset(x, labels, k, clean)
