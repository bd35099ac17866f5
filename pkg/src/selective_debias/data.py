"""Datasets of labelled feature vectors: synthetic generation, splits, CSV I/O."""

import csv
import math
from dataclasses import dataclass

import numpy as np
from sklearn.datasets import make_classification

from .tensor_core import InsufficientDataError

N_FEATURES = 10
N_INFORMATIVE = 5
N_REDUNDANT = 2
CLASS_SEP = 1.0


class DataError(ValueError):
    pass


class SplitError(DataError):
    pass


class SubsampleError(DataError):
    pass


class CSVParseError(DataError):
    pass


@dataclass(frozen=True, eq=False)
class LabeledEmbeddings:
    """Feature matrix with task labels and protected-group labels."""

    features: np.ndarray
    labels: np.ndarray
    protected: np.ndarray
    class_count: int
    group_count: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        g = np.asarray(self.protected)
        if x.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain non-finite values")
        n = x.shape[0]
        if y.shape != (n,) or g.shape != (n,):
            raise DataError("labels and protected must have one entry per row")
        y = _as_index_array(y, "labels")
        g = _as_index_array(g, "protected")
        _check_coverage(y, self.class_count, "class")
        _check_coverage(g, self.group_count, "group")
        for arr in (x, y, g):
            arr.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "protected", g)

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def take(self, idx):
        """Row subset; raises :class:`DataError` if a class or group vanishes."""
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledEmbeddings(
            self.features[idx],
            self.labels[idx],
            self.protected[idx],
            self.class_count,
            self.group_count,
        )

    def equals(self, other):
        return (
            self.class_count == other.class_count
            and self.group_count == other.group_count
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.protected, other.protected)
        )


def _as_index_array(a, name):
    if a.size and not np.all(np.equal(np.mod(a, 1), 0)):
        raise DataError(f"{name} must be integers")
    a = a.astype(np.int64)
    if a.size and a.min() < 0:
        raise DataError(f"{name} must be non-negative")
    return a


def _check_coverage(idx, count, what):
    if count < 1:
        raise DataError(f"{what} count must be positive")
    if idx.size and idx.max() >= count:
        raise DataError(f"{what} index {idx.max()} out of range for {count} {what}es")
    missing = np.setdiff1d(np.arange(count), idx)
    if missing.size:
        raise DataError(f"{what} {missing.tolist()} not present")


def generate_synthetic(n_total=10000, seed=42):
    """Two-class synthetic task with a geometric protected attribute.

    10 features: columns 0-4 informative (Gaussian clusters on hypercube
    vertices, two clusters per class), 5-6 redundant linear combinations of
    the informative ones, 7-9 pure noise. The protected group is 1 where the
    first informative feature (column 0) is positive. Rows are shuffled with
    the same seed; feature columns are left in role order.
    """
    if n_total < 100:
        raise InsufficientDataError(f"n_total must be at least 100, got {n_total}")
    x, y = make_classification(
        n_samples=n_total,
        n_features=N_FEATURES,
        n_informative=N_INFORMATIVE,
        n_redundant=N_REDUNDANT,
        n_clusters_per_class=2,
        class_sep=CLASS_SEP,
        shuffle=False,
        random_state=seed,
    )
    order = np.random.default_rng(seed).permutation(n_total)
    x, y = x[order], y[order]
    protected = (x[:, 0] > 0).astype(np.int64)
    return LabeledEmbeddings(x, y, protected, 2, 2)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.6
    val_fraction: float = 0.2
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(not 0.0 < f < 1.0 for f in fr):
            raise SplitError(f"split fractions must lie in (0, 1): {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise SplitError(f"split fractions must sum to 1, got {sum(fr)}")


def split(data, spec):
    """Shuffled disjoint train/val/test partition, deterministic in ``spec.seed``."""
    n = len(data)
    n_train = int(round(spec.train_fraction * n))
    n_val = int(round(spec.val_fraction * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise SplitError(f"split sizes {n_train}/{n_val}/{n_test} leave an empty part")
    perm = np.random.default_rng(spec.seed).permutation(n)
    parts = (perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :])
    out = []
    for name, idx in zip(("train", "val", "test"), parts):
        try:
            out.append(data.take(idx))
        except DataError as err:
            raise SplitError(f"{name} split is degenerate: {err}") from err
    return tuple(out)


def subsample_fraction(data, fraction, seed=0):
    """Uniform random row subset of size ``round(fraction * n)``, in stored order."""
    if not 0.0 < fraction <= 1.0:
        raise SubsampleError(f"fraction must lie in (0, 1], got {fraction}")
    if fraction == 1.0:
        return data
    n = len(data)
    k = int(round(fraction * n))
    if k < 1:
        raise SubsampleError("subsample is empty")
    idx = np.sort(np.random.default_rng(seed).choice(n, size=k, replace=False))
    try:
        return data.take(idx)
    except DataError as err:
        raise SubsampleError(str(err)) from err


def prefix(data, fraction):
    """The first ``floor(fraction * n)`` rows in stored order (calibration subset)."""
    if not 0.0 < fraction <= 1.0:
        raise SubsampleError(f"fraction must lie in (0, 1], got {fraction}")
    k = max(1, int(math.floor(fraction * len(data) + 1e-9)))
    try:
        return data.take(np.arange(k))
    except DataError as err:
        raise SubsampleError(f"calibration prefix is degenerate: {err}") from err


def write_csv(data, fh):
    """Write ``data`` to an open text stream; floats use ``repr`` so they round-trip."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([f"f{j}" for j in range(data.dim)] + ["label", "protected"])
    for row, y, g in zip(data.features, data.labels, data.protected):
        w.writerow([repr(float(v)) for v in row] + [int(y), int(g)])


def save_csv(data, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_csv(data, fh)


def load_csv(path, class_count=None, group_count=None):
    """Read a ``f0,...,f{d-1},label,protected`` file.

    Class and group counts default to ``max index + 1``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CSVParseError(f"{path}: empty file")
    header = rows[0]
    if len(header) < 3 or header[-2:] != ["label", "protected"]:
        raise CSVParseError(f"{path}: header must end with 'label,protected'")
    d = len(header) - 2
    if header[:d] != [f"f{j}" for j in range(d)]:
        raise CSVParseError(f"{path}: feature columns must be named f0..f{d - 1}")
    feats, labels, groups = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != d + 2:
            raise CSVParseError(f"{path}: row {lineno} has {len(row)} columns, expected {d + 2}")
        try:
            feats.append([float(v) for v in row[:d]])
            labels.append(int(row[d]))
            groups.append(int(row[d + 1]))
        except ValueError as err:
            raise CSVParseError(f"{path}: row {lineno}: {err}") from err
    if not feats:
        raise CSVParseError(f"{path}: no data rows")
    labels = np.array(labels, dtype=np.int64)
    groups = np.array(groups, dtype=np.int64)
    c = class_count if class_count is not None else int(labels.max()) + 1
    g = group_count if group_count is not None else int(groups.max()) + 1
    return LabeledEmbeddings(np.array(feats, dtype=np.float64), labels, groups, c, g)
