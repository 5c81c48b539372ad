"""Mean-difference hyperplane construction for one branching block.

A block is split along FS(x) = sum_i w_i x_i where w_i is the target vs
non-target mean difference of feature i, scaled by the largest absolute
difference. The cut on FS is chosen among the extreme FS values of the two
classes so that one side is pure whenever enough pure samples exist.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class DegenerateSplitError(RuntimeError):
    """A split produced an empty side; signals a violated precondition."""


class SplitCase(str, enum.Enum):
    N1 = "N1"  # cut at min NFS, left side is pure target
    N2 = "N2"  # cut just above max NFS, right side is pure target
    N3 = "N3"  # cut at min TFS, left side is pure non-target
    N4 = "N4"  # cut just above max TFS, right side is pure non-target
    FALLBACK_E = "FALLBACK_E"


@dataclass(frozen=True, eq=False)
class Block:
    rows: np.ndarray
    is_target: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        flags = np.asarray(self.is_target, dtype=bool)
        if rows.shape != flags.shape or rows.ndim != 1:
            raise ValueError("rows and is_target must be equal-length vectors")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "is_target", flags)

    def __len__(self) -> int:
        return self.rows.shape[0]

    @property
    def n_target(self) -> int:
        return int(self.is_target.sum())

    @property
    def is_pure(self) -> bool:
        t = self.n_target
        return t == 0 or t == len(self)

    def subset(self, mask: np.ndarray) -> "Block":
        return Block(self.rows[mask], self.is_target[mask])


@dataclass(frozen=True, eq=False)
class FeatureWeights:
    weights: np.ndarray
    selected: tuple
    sd: np.ndarray
    sd_max: float

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def is_empty(self) -> bool:
        return not self.selected


@dataclass(frozen=True)
class FsSummary:
    min_tfs: float
    max_tfs: float
    min_nfs: float
    max_nfs: float
    e: float
    n1: int
    n2: int
    n3: int
    n4: int

    @property
    def counts(self):
        return (self.n1, self.n2, self.n3, self.n4)


@dataclass(frozen=True, eq=False)
class SplitPlan:
    weights: FeatureWeights
    threshold: float
    left_inclusive: bool
    chosen_case: SplitCase

    def goes_left(self, fs):
        return fs <= self.threshold if self.left_inclusive else fs < self.threshold


def _matrix(data) -> np.ndarray:
    return data.features if hasattr(data, "features") else np.asarray(data, dtype=np.float64)


def variance_filter(block: Block, data, alpha: float, features: Optional[Sequence[int]] = None):
    """Indices of features whose population variance over the block exceeds ``alpha``.

    Variance is computed in two passes (mean of squared deviations), which
    equals E[X^2] - E[X]^2 exactly in real arithmetic; columns that are
    constant within the block get variance 0.
    """
    if len(block) == 0:
        raise ValueError("variance_filter needs a non-empty block")
    cols = np.arange(_matrix(data).shape[1]) if features is None else np.asarray(features, dtype=np.int64)
    if cols.size == 0:
        return []
    X = _matrix(data)[np.ix_(block.rows, cols)]
    dev = X - X.mean(axis=0)
    var = (dev * dev).mean(axis=0)
    var[X.max(axis=0) == X.min(axis=0)] = 0.0
    return [int(c) for c in cols[var > alpha]]


def separation_degrees(block: Block, data, features: Sequence[int]):
    """Target-minus-non-target mean per listed feature; others get 0."""
    X = _matrix(data)
    sd = np.zeros(X.shape[1])
    cols = np.asarray(list(features), dtype=np.int64)
    if cols.size == 0:
        return sd, 0.0
    t = block.is_target
    if t.all() or not t.any():
        raise ValueError("separation_degrees needs both target and non-target rows")
    sub = X[np.ix_(block.rows, cols)]
    sd[cols] = sub[t].mean(axis=0) - sub[~t].mean(axis=0)
    return sd, float(np.abs(sd[cols]).max())


def compute_weights(sd, sd_max: float, beta: float, features: Optional[Sequence[int]] = None) -> FeatureWeights:
    """Normalize separation degrees by ``sd_max`` and keep those with ``|w| >= beta``.

    ``features`` restricts the candidates (normally the variance-filtered
    set); by default every feature is a candidate. ``sd_max == 0`` yields an
    empty selection.
    """
    sd = np.asarray(sd, dtype=np.float64)
    if sd_max < 0:
        raise ValueError("sd_max must be non-negative")
    m = sd.shape[0]
    cand = np.arange(m) if features is None else np.asarray(list(features), dtype=np.int64)
    w = np.zeros(m)
    if sd_max == 0 or cand.size == 0:
        return FeatureWeights(w, (), sd, float(sd_max))
    raw = sd[cand] / sd_max
    keep = cand[np.abs(raw) >= beta]
    w[keep] = sd[keep] / sd_max
    return FeatureWeights(w, tuple(int(i) for i in keep), sd, float(sd_max))


def feature_sums(X: np.ndarray, w: FeatureWeights) -> np.ndarray:
    """FS for every row of ``X``.

    Accumulates one selected feature at a time in index order so a single
    row and a batch produce bit-identical sums.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != w.m:
        raise ValueError(f"expected {w.m} features, got {X.shape[-1]}")
    out = np.zeros(X.shape[0])
    for i in w.selected:
        out += w.weights[i] * X[:, i]
    return out


def feature_sum(x, w: FeatureWeights) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("feature_sum expects a single vector")
    return float(feature_sums(x[None, :], w)[0])


def summarize_values(fs: np.ndarray, is_target: np.ndarray) -> FsSummary:
    tfs = fs[is_target]
    nfs = fs[~is_target]
    if tfs.size == 0 or nfs.size == 0:
        raise ValueError("FS summary needs both target and non-target rows")
    min_t, max_t = float(tfs.min()), float(tfs.max())
    min_n, max_n = float(nfs.min()), float(nfs.max())
    return FsSummary(
        min_tfs=min_t, max_tfs=max_t, min_nfs=min_n, max_nfs=max_n,
        e=(min_n + max_n + min_t + max_t) / 4,
        n1=int((tfs < min_n).sum()),
        n2=int((tfs > max_n).sum()),
        n3=int((nfs < min_t).sum()),
        n4=int((nfs > max_t).sum()),
    )


def summarize_fs(block: Block, data, w: FeatureWeights) -> FsSummary:
    fs = feature_sums(_matrix(data)[block.rows], w)
    return summarize_values(fs, block.is_target)


def select_threshold(s: FsSummary, gamma: int):
    """Pick the cut on FS; returns ``(threshold, left_inclusive, case)``.

    Ties among the pure counts resolve in the order N1, N2, N3, N4. The
    "+ infinitesimal" cuts are expressed as an inclusive left side at the
    extreme value itself.
    """
    if gamma < 1:
        raise ValueError("gamma must be a positive integer")
    n_max = max(s.counts)
    if n_max >= gamma:
        if s.n1 == n_max:
            return s.min_nfs, False, SplitCase.N1
        if s.n2 == n_max:
            return s.max_nfs, True, SplitCase.N2
        if s.n3 == n_max:
            return s.min_tfs, False, SplitCase.N3
        return s.max_tfs, True, SplitCase.N4
    e = s.e
    lo = min(s.min_tfs, s.min_nfs)
    if e <= lo < max(s.max_tfs, s.max_nfs):
        # rounding can land the mean on the minimum when extremes are adjacent floats
        e = float(np.nextafter(lo, np.inf))
    return e, False, SplitCase.FALLBACK_E


def partition(fs: np.ndarray, plan: SplitPlan) -> np.ndarray:
    """Boolean mask of rows routed to the left child."""
    return plan.goes_left(fs)


def apply_split(block: Block, data, plan: SplitPlan):
    fs = feature_sums(_matrix(data)[block.rows], plan.weights)
    left = partition(fs, plan)
    n_left = int(left.sum())
    if n_left == 0 or n_left == len(block):
        raise DegenerateSplitError(
            f"split with case {plan.chosen_case.value} left {n_left} of {len(block)} rows on the left"
        )
    return block.subset(left), block.subset(~left)


def plan_split(block: Block, data, alpha: float, beta: float, gamma: int, features=None):
    """Full per-node procedure; returns ``(plan, fs)`` or ``None`` when the block must become a leaf.

    ``None`` covers an empty variance-filtered set, zero separation, and
    all-equal feature sums.
    """
    X = _matrix(data)
    kept = variance_filter(block, X, alpha, features)
    if not kept:
        return None
    sd, sd_max = separation_degrees(block, X, kept)
    w = compute_weights(sd, sd_max, beta, kept)
    if w.is_empty:
        return None
    fs = feature_sums(X[block.rows], w)
    if fs.max() == fs.min():
        return None
    s = summarize_values(fs, block.is_target)
    threshold, inclusive, case = select_threshold(s, gamma)
    return SplitPlan(w, threshold, inclusive, case), fs
