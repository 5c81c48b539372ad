"""One-vs-rest orchestration and the per-class tree ensemble."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .dataset import (
    Dataset,
    NormalizationStats,
    apply_normalizer,
    derive_seed,
    fit_normalizer,
    make_rng,
    subsample_indices,
)
from .tree import TreeParams, build_tree, membership_batch

SUBSAMPLE_RETRY_BUDGET = 100


@dataclass(frozen=True)
class ForestParams:
    trees_per_class: int = 1
    beta_prime: float = 0.0
    forest_rate: float = 1.0
    base: TreeParams = field(default_factory=TreeParams)
    seed: int = 0
    feature_fraction: Optional[float] = None

    def __post_init__(self):
        if int(self.trees_per_class) != self.trees_per_class or self.trees_per_class < 1:
            raise ValueError("trees_per_class must be a positive integer")
        if not 0.0 <= self.beta_prime <= 1.0:
            raise ValueError("beta_prime must lie in [0, 1]")
        if not 0.0 < self.forest_rate <= 1.0:
            raise ValueError("forest_rate must lie in (0, 1]")
        if self.feature_fraction is not None and not 0.0 < self.feature_fraction <= 1.0:
            raise ValueError("feature_fraction must lie in (0, 1]")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def betas(self) -> tuple:
        """Per-tree beta: ``beta_prime * i / t``; a single tree uses ``beta_prime`` itself."""
        t = self.trees_per_class
        if t == 1:
            return (self.beta_prime,)
        return tuple(self.beta_prime * i / t for i in range(t))


@dataclass(frozen=True, eq=False)
class LhForest:
    trees: tuple  # trees[c][i]
    class_labels: tuple
    normalizer: Optional[NormalizationStats]
    params: ForestParams
    m: int
    feature_names: Optional[tuple] = None
    build_seconds: Optional[tuple] = field(default=None, compare=False)

    @property
    def k(self) -> int:
        return len(self.trees)


@dataclass(frozen=True, eq=False)
class ClassScores:
    scores: np.ndarray
    predicted: int
    margin: float


@dataclass(frozen=True, eq=False)
class Predictions:
    predicted: np.ndarray
    scores: np.ndarray  # (n, k)

    def __len__(self):
        return self.predicted.shape[0]


@dataclass(frozen=True, eq=False)
class Evaluation:
    accuracy: float
    confusion: np.ndarray  # confusion[true, predicted]

    @property
    def n(self) -> int:
        return int(self.confusion.sum())


def _draw_rows(labels, c, params, key_seed):
    n = labels.shape[0]
    if params.forest_rate >= 1.0:
        return np.arange(n)
    for attempt in range(SUBSAMPLE_RETRY_BUDGET):
        rows = subsample_indices(n, params.forest_rate, derive_seed(key_seed, attempt, 0))
        hit = labels[rows] == c
        if hit.any() and not hit.all():
            return rows
    raise ValueError(
        f"class {c}: no subsample at rate {params.forest_rate} kept both target "
        f"and non-target rows after {SUBSAMPLE_RETRY_BUDGET} attempts"
    )


def _draw_features(m, params, key_seed):
    if params.feature_fraction is None:
        return None
    size = min(m, max(1, math.ceil(round(params.feature_fraction * m, 9))))
    rng = make_rng(derive_seed(key_seed, 0, 1))
    return tuple(int(i) for i in np.sort(rng.choice(m, size=size, replace=False)))


def train_forest(train: Dataset, params: ForestParams, normalize: bool = True) -> LhForest:
    """Fit ``trees_per_class`` trees for every class.

    With ``s = derive_seed(seed, c, i)``, tree ``(c, i)`` uses beta from
    :meth:`ForestParams.betas`, a row subset at ``forest_rate`` drawn from
    ``derive_seed(s, attempt, 0)`` and, when ``feature_fraction`` is set, a
    feature subset drawn from ``derive_seed(s, 0, 1)``. Attempts advance
    only when a row subset loses every target (or every non-target) row.
    """
    if train.k < 2:
        raise ValueError("need at least two classes")
    present = np.unique(train.labels)
    if present.size != train.k:
        raise ValueError(f"training data lacks classes {sorted(set(range(train.k)) - set(present.tolist()))}")
    normalizer = fit_normalizer(train) if normalize else None
    data = apply_normalizer(train, normalizer) if normalize else train
    betas = params.betas()
    trees, seconds = [], []
    for c in range(train.k):
        per_class, per_time = [], []
        for i in range(params.trees_per_class):
            key_seed = derive_seed(params.seed, c, i)
            start = time.perf_counter()
            rows = _draw_rows(data.labels, c, params, key_seed)
            feats = _draw_features(data.m, params, key_seed)
            part = data if rows.shape[0] == data.n else data.take(rows)
            tree = build_tree(part, c, replace(params.base, beta=betas[i]), feats)
            per_time.append(time.perf_counter() - start)
            per_class.append(tree)
        trees.append(tuple(per_class))
        seconds.append(tuple(per_time))
    labels = train.class_labels or tuple(str(c) for c in range(train.k))
    return LhForest(tuple(trees), labels, normalizer, params, train.m, train.feature_names, tuple(seconds))


def _prepare(forest: LhForest, X) -> np.ndarray:
    X = np.asarray(X.features if hasattr(X, "features") else X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1) if X.size else X.reshape(0, forest.m)
    if X.shape[1] != forest.m:
        raise ValueError(f"model expects {forest.m} features, got {X.shape[1]}")
    return forest.normalizer.transform(X) if forest.normalizer is not None else X


def score_matrix(forest: LhForest, X) -> np.ndarray:
    """Per-row, per-class mean membership; shape ``(n, k)``."""
    Z = _prepare(forest, X)
    out = np.zeros((Z.shape[0], forest.k))
    for c, per_class in enumerate(forest.trees):
        acc = np.zeros(Z.shape[0])
        for tree in per_class:
            acc += membership_batch(tree, Z)
        out[:, c] = acc / len(per_class)
    return out


def _decide(scores: np.ndarray) -> np.ndarray:
    return np.argmax(scores, axis=1)  # first maximum, i.e. smallest class id on ties


def score(forest: LhForest, x) -> ClassScores:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (forest.m,):
        raise ValueError(f"model expects a length-{forest.m} vector, got shape {x.shape}")
    s = score_matrix(forest, x[None, :])[0]
    top = int(_decide(s[None, :])[0])
    runner = np.max(np.delete(s, top)) if s.size > 1 else 0.0
    return ClassScores(s, top, float(s[top] - runner))


def predict_batch(forest: LhForest, data) -> Predictions:
    s = score_matrix(forest, data)
    return Predictions(_decide(s), s)


def evaluate(forest: LhForest, test: Dataset) -> Evaluation:
    pred = predict_batch(forest, test).predicted
    k = forest.k
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (test.labels, pred), 1)
    acc = float(np.trace(confusion) / test.n) if test.n else float("nan")
    return Evaluation(acc, confusion)
