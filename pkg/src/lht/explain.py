"""Per-branch feature weights and an aggregate feature-importance summary."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forest import LhForest
from .tree import Branch, iter_nodes, subtree_rows


@dataclass(frozen=True, eq=False)
class NodeWeightRecord:
    class_id: int
    tree_index: int
    node_path: str
    weights: np.ndarray
    threshold: float
    chosen_case: str
    subtree_sizes: tuple  # (left rows, right rows)

    @property
    def node_rows(self) -> int:
        return self.subtree_sizes[0] + self.subtree_sizes[1]


@dataclass(frozen=True, eq=False)
class ImportanceSummary:
    importance: np.ndarray
    normalization: str = "sum-to-one"
    empty: bool = False


def extract_node_weights(forest: LhForest) -> list:
    """One record per branch, ordered by class, tree index, then preorder."""
    records = []
    for c, per_class in enumerate(forest.trees):
        for i, tree in enumerate(per_class):
            for path, node, _ in iter_nodes(tree.root):
                if not isinstance(node, Branch):
                    continue
                plan = node.plan
                records.append(NodeWeightRecord(
                    class_id=c,
                    tree_index=i,
                    node_path=path,
                    weights=plan.weights.weights.copy(),
                    threshold=plan.threshold,
                    chosen_case=plan.chosen_case.value,
                    subtree_sizes=(subtree_rows(node.left), subtree_rows(node.right)),
                ))
    return records


def importance_summary(records, weighting: str = "uniform", m: int = None) -> ImportanceSummary:
    """Mean ``|w|`` per feature across records, rescaled to sum to one.

    ``weighting="by-node-size"`` weights each record by the number of
    training rows that reached its branch. With no records (or only zero
    weights) the summary is all zeros and flagged ``empty``.
    """
    if weighting not in ("uniform", "by-node-size"):
        raise ValueError(f"unknown weighting {weighting!r}")
    records = list(records)
    if not records:
        if m is None:
            raise ValueError("m is required to summarize an empty record list")
        return ImportanceSummary(np.zeros(m), empty=True)
    W = np.abs(np.vstack([r.weights for r in records]))
    if weighting == "uniform":
        mass = W.mean(axis=0)
    else:
        size = np.array([r.node_rows for r in records], dtype=np.float64)
        mass = (W * size[:, None]).sum(axis=0) / size.sum()
    total = mass.sum()
    if total == 0:
        return ImportanceSummary(np.zeros(W.shape[1]), empty=True)
    return ImportanceSummary(mass / total)
