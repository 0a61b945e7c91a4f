"""Datasets: CSV ingestion, seeded train/val/test splits, 2-D synthetic tasks."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .rng import stream

PARTITIONS = ("train", "val", "test")
SYNTHETIC_KINDS = ("two_moons", "gaussian_blobs", "concentric_rings")

_EMPTY = np.zeros(0, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    n_classes: int
    train_idx: np.ndarray = field(default=_EMPTY)
    val_idx: np.ndarray = field(default=_EMPTY)
    test_idx: np.ndarray = field(default=_EMPTY)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise DataError(f"X {X.shape} and y {y.shape} do not line up")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise DataError(f"labels must lie in [0, {self.n_classes})")
        for arr in (X, y):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        parts = [np.asarray(getattr(self, f"{p}_idx"), dtype=np.int64) for p in PARTITIONS]
        if any(len(p) for p in parts):
            allidx = np.concatenate(parts)
            if len(allidx) != len(y) or not np.array_equal(np.sort(allidx), np.arange(len(y))):
                raise DataError("partitions must be disjoint and cover every row")
        for name, p in zip(PARTITIONS, parts):
            p.setflags(write=False)
            object.__setattr__(self, f"{name}_idx", p)

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def is_partitioned(self) -> bool:
        return len(self.train_idx) + len(self.val_idx) + len(self.test_idx) > 0

    def partition(self, name):
        """``(X, y)`` of the named partition."""
        if name not in PARTITIONS:
            raise ConfigError(f"unknown partition {name!r}; choose from {', '.join(PARTITIONS)}")
        idx = getattr(self, f"{name}_idx")
        return self.X[idx], self.y[idx]

    def require(self, name):
        X, y = self.partition(name)
        if len(y) == 0:
            raise DataError(f"the {name} partition is empty")
        return X, y

    @property
    def X_train(self):
        return self.partition("train")[0]

    @property
    def y_train(self):
        return self.partition("train")[1]

    @property
    def X_val(self):
        return self.partition("val")[0]

    @property
    def y_val(self):
        return self.partition("val")[1]

    @property
    def X_test(self):
        return self.partition("test")[0]

    @property
    def y_test(self):
        return self.partition("test")[1]


def load_csv(path, label_column="y") -> Dataset:
    """Read a numeric CSV with a header row.

    Features are every non-label column in header order; labels must be
    non-negative integers and the class count is ``max(label) + 1``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if label_column not in header:
        raise DataError(f"{path}: no header column named {label_column!r} (header: {header})")
    if all(_is_number(h) for h in header):
        raise DataError(f"{path}: first row looks numeric; a header row is required")
    li = header.index(label_column)
    feats, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}: row {lineno} has {len(row)} cells, header has {len(header)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise DataError(f"{path}: row {lineno} has a non-numeric cell") from None
        lab = vals[li]
        if not math.isfinite(lab) or lab < 0 or lab != int(lab):
            raise DataError(f"{path}: row {lineno} label {row[li]!r} is not a non-negative integer")
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"{path}: row {lineno} has a non-finite value")
        labels.append(int(lab))
        feats.append(vals[:li] + vals[li + 1 :])
    if not labels:
        raise DataError(f"{path}: no data rows")
    X = np.array(feats, dtype=np.float64).reshape(len(labels), len(header) - 1)
    y = np.array(labels, dtype=np.int64)
    return Dataset(X, y, int(y.max()) + 1)


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def split(dataset: Dataset, val_fraction=0.1, test_fraction=0.0, seed=0) -> Dataset:
    """Seeded shuffle, then contiguous train | val | test slices."""
    if not (0 <= val_fraction < 1 and 0 <= test_fraction < 1 and val_fraction + test_fraction < 1):
        raise ConfigError("fractions must lie in [0, 1) and sum to less than 1")
    n = len(dataset)
    n_val = int(round(n * val_fraction))
    n_test = int(round(n * test_fraction))
    n_train = n - n_val - n_test
    if n_train < 1:
        raise DataError("split leaves the training partition empty")
    if val_fraction > 0 and n_val == 0:
        raise DataError(f"val_fraction={val_fraction} leaves the validation partition empty")
    if test_fraction > 0 and n_test == 0:
        raise DataError(f"test_fraction={test_fraction} leaves the test partition empty")
    perm = stream(seed, "split").permutation(n)
    return replace(
        dataset,
        train_idx=perm[:n_train],
        val_idx=perm[n_train : n_train + n_val],
        test_idx=perm[n_train + n_val :],
    )


def gen_synthetic(kind, n, noise=0.1, seed=0) -> Dataset:
    """2-D toy classification task; labels alternate so class counts are balanced.

    ``two_moons`` and ``gaussian_blobs`` have 2 classes, ``concentric_rings``
    has 3.  Coordinates are roughly within [-2, 2].
    """
    if kind not in SYNTHETIC_KINDS:
        raise ConfigError(f"unknown synthetic kind {kind!r}; choose from {', '.join(SYNTHETIC_KINDS)}")
    if n < 10:
        raise ConfigError("synthetic datasets need n >= 10")
    if noise < 0:
        raise ConfigError("noise must be non-negative")
    rng = stream(seed, "synthetic")
    n_classes = 3 if kind == "concentric_rings" else 2
    y = np.arange(n) % n_classes
    if kind == "two_moons":
        t = rng.uniform(0.0, np.pi, size=n)
        upper = np.column_stack([np.cos(t), np.sin(t)])
        lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
        X = np.where((y == 0)[:, None], upper, lower)
        # center on the origin
        X = X - np.array([0.5, 0.25])
    elif kind == "gaussian_blobs":
        centers = np.array([[-1.0, -1.0], [1.0, 1.0]])
        X = centers[y]
    else:
        radii = np.array([0.5, 1.25, 2.0])
        t = rng.uniform(0.0, 2 * np.pi, size=n)
        X = radii[y][:, None] * np.column_stack([np.cos(t), np.sin(t)])
    X = X + rng.normal(0.0, noise, size=(n, 2)) if noise > 0 else X
    return Dataset(X, y, n_classes)


def dataset_from_source(source, n_samples=1000, noise=0.15, label_column="y",
                        synth_seed=0) -> Dataset:
    """A synthetic kind name or a CSV path."""
    if source in SYNTHETIC_KINDS:
        return gen_synthetic(source, n_samples, noise, synth_seed)
    path = Path(source)
    if not path.is_file():
        raise ConfigError(
            f"dataset {source!r} is neither a synthetic kind ({', '.join(SYNTHETIC_KINDS)}) "
            "nor an existing CSV file"
        )
    return load_csv(path, label_column)
