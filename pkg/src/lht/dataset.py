"""Tabular dataset loading, min-max normalization, and seeded sampling."""

from __future__ import annotations

import csv
import gzip
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

MASK64 = (1 << 64) - 1
SPLIT_RETRY_BUDGET = 100


class DatasetError(ValueError):
    """Raised when input data violates the dataset contract."""


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Derive a 64-bit child seed from a master seed and a counter path.

    h0 = splitmix64(seed); h_{j+1} = splitmix64(h_j XOR key_j). The same
    (seed, keys) pair always yields the same child seed, so per-tree and
    per-run streams are reproducible regardless of execution order.
    """
    h = _splitmix64(int(seed) & MASK64)
    for key in keys:
        h = _splitmix64(h ^ (int(key) & MASK64))
    return h


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Numeric feature matrix with integer class ids in ``0..k-1``.

    ``class_labels[c]`` is the original label text of class id ``c``.
    Subsets produced by :meth:`take` keep the parent's class space, so a
    test split may legitimately miss some classes.
    """

    features: np.ndarray
    labels: np.ndarray
    k: int
    feature_names: Optional[tuple] = None
    class_labels: Optional[tuple] = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise DatasetError(f"features must be a 2-D matrix, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DatasetError(
                f"labels length {y.shape[0] if y.ndim == 1 else y.shape} "
                f"does not match {X.shape[0]} feature rows"
            )
        if not np.all(np.isfinite(X)):
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise DatasetError(f"non-finite feature value at row {r}, column {c}")
        if self.k < 1:
            raise DatasetError("k must be positive")
        if y.size and (y.min() < 0 or y.max() >= self.k):
            raise DatasetError(f"labels must lie in 0..{self.k - 1}")
        if self.feature_names is not None and len(self.feature_names) != X.shape[1]:
            raise DatasetError("feature_names length does not match feature count")
        if self.class_labels is not None and len(self.class_labels) != self.k:
            raise DatasetError("class_labels length does not match k")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.class_labels is not None:
            object.__setattr__(self, "class_labels", tuple(self.class_labels))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]

    @classmethod
    def from_arrays(cls, features, labels, k=None, feature_names=None, class_labels=None):
        """Build a dataset and enforce full class coverage."""
        y = np.asarray(labels, dtype=np.int64)
        if k is None:
            k = int(y.max()) + 1 if y.size else 1
        ds = cls(features, y, int(k), feature_names, class_labels)
        ds.check_complete()
        return ds

    def check_complete(self) -> None:
        if self.n == 0:
            raise DatasetError("dataset is empty")
        present = np.unique(self.labels)
        if present.size < 2:
            raise DatasetError("dataset contains a single class")
        if present.size != self.k:
            missing = sorted(set(range(self.k)) - set(present.tolist()))
            raise DatasetError(f"classes {missing} have no samples")

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[idx], self.labels[idx], self.k,
            self.feature_names, self.class_labels,
        )

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.labels, self.k, self.feature_names, self.class_labels)


def _open_text(path: Path):
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, "r", encoding="utf-8", newline="")


def _read_rows(path: Union[str, Path]):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"data file not found: {path}")
    with _open_text(path) as handle:
        return [row for row in csv.reader(handle) if row and any(c.strip() for c in row)]


def _resolve_column(label_column, header: Optional[list], width: int) -> int:
    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if header is None:
            raise DatasetError(f"label column {label_column!r} given by name but file has no header")
        names = [h.strip() for h in header]
        if label_column not in names:
            raise DatasetError(f"label column {label_column!r} not in header {names}")
        return names.index(label_column)
    idx = int(label_column)
    if idx < 0:
        idx += width
    if not 0 <= idx < width:
        raise DatasetError(f"label column index {label_column} out of range for {width} columns")
    return idx


def _parse_feature_rows(rows, first_line: int, feature_cols: Sequence[int]) -> np.ndarray:
    X = np.empty((len(rows), len(feature_cols)), dtype=np.float64)
    for r, row in enumerate(rows):
        for j, c in enumerate(feature_cols):
            cell = row[c].strip()
            try:
                v = float(cell)
            except ValueError:
                raise DatasetError(
                    f"unparsable value {cell!r} at row {first_line + r}, column {c}"
                ) from None
            if not math.isfinite(v):
                raise DatasetError(
                    f"non-finite value {cell!r} at row {first_line + r}, column {c}"
                )
            X[r, j] = v
    return X


def encode_labels(raw: Sequence[str]):
    """Map raw label strings to class ids.

    Integer labels are ordered numerically (so ``1,2,3`` becomes ``0,1,2``);
    any other labels are numbered by first appearance.
    """
    raw = [s.strip() for s in raw]
    try:
        as_int = [int(s) for s in raw]
    except ValueError:
        as_int = None
    if as_int is not None:
        classes = sorted(set(as_int))
        lookup = {v: i for i, v in enumerate(classes)}
        return np.array([lookup[v] for v in as_int], dtype=np.int64), tuple(str(v) for v in classes)
    lookup: dict = {}
    for s in raw:
        lookup.setdefault(s, len(lookup))
    return np.array([lookup[s] for s in raw], dtype=np.int64), tuple(lookup)


def load_csv(path, label_column: Union[str, int] = -1, header: bool = True) -> Dataset:
    """Load a comma-separated file into a validated :class:`Dataset`.

    ``label_column`` is a header name or a 0-based index (negative indices
    count from the end). Files ending in ``.gz`` are decompressed.
    """
    rows = _read_rows(path)
    head = None
    if header:
        if not rows:
            raise DatasetError(f"{path}: empty file")
        head, rows = rows[0], rows[1:]
    if not rows:
        raise DatasetError(f"{path}: dataset is empty")
    width = len(head) if head is not None else len(rows[0])
    for r, row in enumerate(rows):
        if len(row) != width:
            raise DatasetError(
                f"{path}: row {r + (2 if header else 1)} has {len(row)} columns, expected {width}"
            )
    lab = _resolve_column(label_column, head, width)
    feature_cols = [c for c in range(width) if c != lab]
    X = _parse_feature_rows(rows, 2 if header else 1, feature_cols)
    y, class_labels = encode_labels([row[lab] for row in rows])
    names = tuple(head[c].strip() for c in feature_cols) if head is not None else None
    ds = Dataset(X, y, len(class_labels), names, class_labels)
    ds.check_complete()
    return ds


def load_feature_csv(path, m: int, label_column=None, header: bool = True):
    """Read an unlabeled (or label-ignored) matrix for prediction.

    Unlike :func:`load_csv` this accepts zero data rows. Returns an
    ``(n, m)`` array.
    """
    rows = _read_rows(path)
    head = None
    if header and rows:
        head, rows = rows[0], rows[1:]
    width = len(head) if head is not None else (len(rows[0]) if rows else m)
    cols = list(range(width))
    if label_column is not None:
        cols.remove(_resolve_column(label_column, head, width))
    if len(cols) != m:
        raise DatasetError(f"{path}: expected {m} feature columns, found {len(cols)}")
    for r, row in enumerate(rows):
        if len(row) != width:
            raise DatasetError(f"{path}: row {r + (2 if head else 1)} has {len(row)} columns, expected {width}")
    return _parse_feature_rows(rows, 2 if head is not None else 1, cols)


@dataclass(frozen=True, eq=False)
class NormalizationStats:
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.mins, dtype=np.float64)
        hi = np.asarray(self.maxs, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DatasetError("normalizer mins/maxs must be equal-length vectors")
        if np.any(lo > hi):
            raise DatasetError("normalizer has min > max")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "mins", lo)
        object.__setattr__(self, "maxs", hi)

    @property
    def m(self) -> int:
        return self.mins.shape[0]

    def transform(self, X) -> np.ndarray:
        """Min-max scale rows of ``X`` into [0, 1]; constant features map to 0."""
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.m:
            raise DatasetError(f"expected {self.m} features, got {X.shape[-1]}")
        span = self.maxs - self.mins
        safe = np.where(span > 0, span, 1.0)
        out = np.where(span > 0, (X - self.mins) / safe, 0.0)
        return np.clip(out, 0.0, 1.0)


def fit_normalizer(d: Dataset) -> NormalizationStats:
    if d.n == 0:
        raise DatasetError("cannot fit a normalizer on an empty dataset")
    return NormalizationStats(d.features.min(axis=0), d.features.max(axis=0))


def apply_normalizer(d: Dataset, s: NormalizationStats) -> Dataset:
    if s.m != d.m:
        raise DatasetError(f"normalizer has {s.m} features, dataset has {d.m}")
    return d.with_features(s.transform(d.features))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DatasetError("train_fraction must lie in (0, 1)")
        if self.seed < 0:
            raise DatasetError("seed must be non-negative")


def split_indices(n: int, spec: SplitSpec, labels=None, k: Optional[int] = None):
    """Return ``(train_idx, test_idx)``, both sorted.

    When ``labels`` is given, draws are repeated with the next derived seed
    until the training part contains all ``k`` classes.
    """
    if n < 2:
        raise DatasetError("need at least 2 rows to split")
    n_train = min(max(int(math.floor(spec.train_fraction * n + 0.5)), 1), n - 1)
    for attempt in range(SPLIT_RETRY_BUDGET):
        perm = make_rng(derive_seed(spec.seed, attempt)).permutation(n)
        train = np.sort(perm[:n_train])
        test = np.sort(perm[n_train:])
        if labels is None or np.unique(labels[train]).size == k:
            return train, test
    raise DatasetError(
        f"could not draw a training split covering all {k} classes "
        f"in {SPLIT_RETRY_BUDGET} attempts"
    )


def train_test_split(d: Dataset, spec: SplitSpec):
    train, test = split_indices(d.n, spec, d.labels, d.k)
    return d.take(train), d.take(test)


def subsample_indices(n: int, fraction: float, seed: int) -> np.ndarray:
    if not 0.0 < fraction <= 1.0:
        raise DatasetError("fraction must lie in (0, 1]")
    size = math.ceil(round(fraction * n, 9))
    if size < 1:
        raise DatasetError("subsample would be empty")
    if size >= n:
        return np.arange(n)
    return np.sort(make_rng(seed).choice(n, size=size, replace=False))


def subsample(d: Dataset, fraction: float, seed: int) -> Dataset:
    """Uniform sample of ``ceil(fraction * n)`` rows without replacement, in original order."""
    return d.take(subsample_indices(d.n, fraction, seed))
