"""Repeated hold-out and bootstrap evaluation protocols."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, replace

import numpy as np

from .dataset import Dataset, SplitSpec, derive_seed, make_rng, train_test_split
from .forest import ForestParams, LhForest, evaluate, train_forest


@dataclass
class RunRecord:
    accuracy: float
    train_seconds: float
    tree_seconds: tuple  # flattened per-tree build times
    forest: LhForest


def run_seed(seed: int, run: int) -> int:
    return derive_seed(seed, run)


def repeated_holdout(data: Dataset, params: ForestParams, runs: int = 10,
                     train_fraction: float = 0.8, normalize: bool = True):
    """``runs`` independent split/train/test cycles.

    Run ``j`` draws its split and its forest seed from
    ``derive_seed(params.seed, j)``.
    """
    records = []
    for j in range(runs):
        s = run_seed(params.seed, j)
        train, test = train_test_split(data, SplitSpec(train_fraction, s))
        start = time.perf_counter()
        forest = train_forest(train, replace(params, seed=s), normalize=normalize)
        elapsed = time.perf_counter() - start
        acc = evaluate(forest, test).accuracy
        flat = tuple(t for per_class in forest.build_seconds for t in per_class)
        records.append(RunRecord(acc, elapsed, flat, forest))
    return records


def bootstrap_test(train: Dataset, test: Dataset, params: ForestParams, runs: int = 10,
                   normalize: bool = True):
    """Train once, then score ``runs`` same-size bootstrap resamples of the test set."""
    start = time.perf_counter()
    forest = train_forest(train, params, normalize=normalize)
    elapsed = time.perf_counter() - start
    flat = tuple(t for per_class in forest.build_seconds for t in per_class)
    records = []
    for j in range(runs):
        idx = make_rng(run_seed(params.seed, j)).integers(0, test.n, size=test.n)
        acc = evaluate(forest, test.take(idx)).accuracy
        records.append(RunRecord(acc, elapsed, flat, forest))
    return records


def format_accuracy(accuracies) -> str:
    """Percent with one decimal; ``mean ± sample std`` for more than one run."""
    pct = [100.0 * a for a in accuracies]
    if len(pct) == 1:
        return f"{pct[0]:.1f}"
    return f"{statistics.fmean(pct):.1f} ± {statistics.stdev(pct):.1f}"


def mean_accuracy(records) -> float:
    return float(np.mean([r.accuracy for r in records]))
