"""Single binary-target tree: recursive growth, leaf least-squares fits, routing."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

import numpy as np

from .dataset import Dataset
from .split_engine import Block, DegenerateSplitError, SplitPlan, feature_sums, plan_split


@dataclass(frozen=True)
class TreeParams:
    alpha: float = 0.0
    beta: float = 0.0
    gamma: int = 2
    min_samples: int = 2
    max_depth: int = 50

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if int(self.gamma) != self.gamma or self.gamma < 1:
            raise ValueError("gamma must be a positive integer")
        if int(self.min_samples) != self.min_samples or self.min_samples < 1:
            raise ValueError("min_samples must be a positive integer")
        if int(self.max_depth) != self.max_depth or self.max_depth < 1:
            raise ValueError("max_depth must be a positive integer")


@dataclass(frozen=True, eq=False)
class LeafModel:
    """Clipped linear membership p(x) = sum_i a_i (x_i - mean_i) + label_mean."""

    slopes: np.ndarray
    feature_means: np.ndarray
    label_mean: float
    sample_count: int

    def raw(self, X: np.ndarray) -> np.ndarray:
        out = np.full(X.shape[0], self.label_mean)
        for i in np.flatnonzero(self.slopes):
            out += self.slopes[i] * (X[:, i] - self.feature_means[i])
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.clip(self.raw(X), 0.0, 1.0)

    @property
    def is_pure(self) -> bool:
        return self.label_mean in (0.0, 1.0)


@dataclass(frozen=True, eq=False)
class Leaf:
    model: LeafModel


@dataclass(frozen=True, eq=False)
class Branch:
    plan: SplitPlan
    left: "Node"
    right: "Node"


Node = Union[Leaf, Branch]


@dataclass(frozen=True, eq=False)
class LhTree:
    root: Node
    target_class: int
    params: TreeParams
    m: int
    features: Optional[tuple] = None
    node_count: int = field(init=False)
    leaf_count: int = field(init=False)
    depth: int = field(init=False)

    def __post_init__(self):
        nodes = leaves = depth = 0
        for _, node, d in iter_nodes(self.root):
            nodes += 1
            depth = max(depth, d)
            if isinstance(node, Leaf):
                leaves += 1
        object.__setattr__(self, "node_count", nodes)
        object.__setattr__(self, "leaf_count", leaves)
        object.__setattr__(self, "depth", depth)


def iter_nodes(root: Node) -> Iterator[tuple]:
    """Preorder ``(path, node, depth)``; path is a string of 'L'/'R' from the root."""
    stack = [("", root)]
    while stack:
        path, node = stack.pop()
        yield path, node, len(path)
        if isinstance(node, Branch):
            stack.append((path + "R", node.right))
            stack.append((path + "L", node.left))


def fit_leaf(rows: Block, data, binary_labels=None, features=None) -> LeafModel:
    """Per-feature OLS slopes with a mean-aligned intercept.

    Each slope is Cov(X_i, P) / Var(X_i) over the leaf rows, 0 for columns
    constant within the leaf (and for features outside ``features`` when a
    subset is given).
    """
    if len(rows) == 0:
        raise ValueError("cannot fit a leaf on zero rows")
    X = (data.features if hasattr(data, "features") else np.asarray(data))[rows.rows]
    p = np.asarray(rows.is_target if binary_labels is None else binary_labels, dtype=np.float64)
    means = X.mean(axis=0)
    p_mean = float(p.mean())
    dx = X - means
    var = (dx * dx).sum(axis=0)
    cov = dx.T @ (p - p_mean)
    usable = (X.max(axis=0) > X.min(axis=0)) & (var > 0)
    if features is not None:
        mask = np.zeros(X.shape[1], dtype=bool)
        mask[list(features)] = True
        usable &= mask
    slopes = np.zeros(X.shape[1])
    slopes[usable] = cov[usable] / var[usable]
    return LeafModel(slopes, means, p_mean, len(rows))


def build_tree(train: Dataset, target_class: int, params: TreeParams, features=None) -> LhTree:
    """Grow one tree separating ``target_class`` from every other class.

    A block becomes a leaf when it is single-class, has fewer than
    ``min_samples`` rows, sits at ``max_depth``, or admits no usable
    hyperplane (no feature passes the filters, or all feature sums tie).
    ``features`` optionally restricts the tree to a feature subset.
    """
    is_target = train.labels == target_class
    if not is_target.any():
        raise ValueError(f"no samples of target class {target_class}")
    X = train.features
    feats = None if features is None else tuple(sorted(int(i) for i in features))

    def leaf(block: Block) -> Leaf:
        return Leaf(fit_leaf(block, X, features=feats))

    def grow(block: Block, depth: int) -> Node:
        if block.is_pure or len(block) < params.min_samples or depth >= params.max_depth:
            return leaf(block)
        found = plan_split(block, X, params.alpha, params.beta, params.gamma, feats)
        if found is None:
            return leaf(block)
        plan, fs = found
        left = plan.goes_left(fs)
        n_left = int(left.sum())
        if n_left == 0 or n_left == len(block):
            raise DegenerateSplitError(
                f"depth {depth}: case {plan.chosen_case.value} sent {n_left}/{len(block)} rows left"
            )
        return Branch(plan, grow(block.subset(left), depth + 1), grow(block.subset(~left), depth + 1))

    root = grow(Block(np.arange(train.n), is_target), 0)
    return LhTree(root, int(target_class), params, train.m, feats)


def _route(node: Node, X: np.ndarray, idx: np.ndarray, out: np.ndarray) -> None:
    while isinstance(node, Branch):
        left = node.plan.goes_left(feature_sums(X[idx], node.plan.weights))
        if left.all():
            node = node.left
        elif not left.any():
            node = node.right
        else:
            _route(node.left, X, idx[left], out)
            idx = idx[~left]
            node = node.right
    out[idx] = node.model.predict(X[idx])


def membership_batch(tree: LhTree, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != tree.m:
        raise ValueError(f"expected an (n, {tree.m}) matrix, got shape {X.shape}")
    out = np.empty(X.shape[0])
    if X.shape[0]:
        _route(tree.root, X, np.arange(X.shape[0]), out)
    return out


def membership(tree: LhTree, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (tree.m,):
        raise ValueError(f"expected a length-{tree.m} vector, got shape {x.shape}")
    return float(membership_batch(tree, x[None, :])[0])


def reach_leaf(tree: LhTree, x) -> str:
    """Path string of the leaf that ``x`` is routed to."""
    x = np.asarray(x, dtype=np.float64)[None, :]
    node, path = tree.root, ""
    while isinstance(node, Branch):
        if node.plan.goes_left(feature_sums(x, node.plan.weights))[0]:
            node, path = node.left, path + "L"
        else:
            node, path = node.right, path + "R"
    return path


@dataclass(frozen=True)
class TreeReport:
    depth: int
    node_count: int
    leaf_count: int
    leaf_sizes: tuple
    leaf_purity: tuple


def tree_stats(tree: LhTree) -> TreeReport:
    leaves = [n.model for _, n, _ in iter_nodes(tree.root) if isinstance(n, Leaf)]
    return TreeReport(
        depth=tree.depth,
        node_count=tree.node_count,
        leaf_count=tree.leaf_count,
        leaf_sizes=tuple(m.sample_count for m in leaves),
        leaf_purity=tuple(m.is_pure for m in leaves),
    )


def subtree_rows(node: Node) -> int:
    return sum(n.model.sample_count for _, n, _ in iter_nodes(node) if isinstance(n, Leaf))
