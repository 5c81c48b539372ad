"""Versioned JSON model files.

Layout (keys in this order)::

    format_version   int, currently 1
    params           forest hyperparameters (nested "base" tree params)
    m                feature count
    normalizer       {"mins": [...], "maxs": [...]} or null
    label_mapping    original label text per class id
    feature_names    column names from the training file, or null
    classes          one list of trees per class; each tree is
                     {"target_class", "params", "features", "root"} and every
                     node carries a "node_kind" of "branch" or "leaf"

Floats are written with ``repr`` precision, so a load reproduces every
threshold and coefficient bit for bit.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .dataset import NormalizationStats
from .forest import ForestParams, LhForest
from .split_engine import FeatureWeights, SplitCase, SplitPlan
from .tree import Branch, Leaf, LeafModel, LhTree, TreeParams

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


class ModelVersionError(ModelFormatError):
    pass


def _floats(a) -> list:
    return [float(v) for v in np.asarray(a, dtype=np.float64)]


def _tree_params(p: TreeParams) -> dict:
    return {"alpha": p.alpha, "beta": p.beta, "gamma": p.gamma,
            "min_samples": p.min_samples, "max_depth": p.max_depth}


def _node_to_dict(node) -> dict:
    if isinstance(node, Leaf):
        lm = node.model
        return {
            "node_kind": "leaf",
            "slopes": _floats(lm.slopes),
            "feature_means": _floats(lm.feature_means),
            "label_mean": float(lm.label_mean),
            "sample_count": int(lm.sample_count),
        }
    plan = node.plan
    return {
        "node_kind": "branch",
        "weights": _floats(plan.weights.weights),
        "selected": list(plan.weights.selected),
        "sd": _floats(plan.weights.sd),
        "sd_max": float(plan.weights.sd_max),
        "threshold": float(plan.threshold),
        "left_inclusive": bool(plan.left_inclusive),
        "chosen_case": plan.chosen_case.value,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def to_dict(forest: LhForest) -> dict:
    p = forest.params
    return {
        "format_version": FORMAT_VERSION,
        "params": {
            "trees_per_class": p.trees_per_class,
            "beta_prime": p.beta_prime,
            "forest_rate": p.forest_rate,
            "feature_fraction": p.feature_fraction,
            "seed": p.seed,
            "base": _tree_params(p.base),
        },
        "m": forest.m,
        "normalizer": None if forest.normalizer is None else {
            "mins": _floats(forest.normalizer.mins),
            "maxs": _floats(forest.normalizer.maxs),
        },
        "label_mapping": list(forest.class_labels),
        "feature_names": None if forest.feature_names is None else list(forest.feature_names),
        "classes": [
            [
                {
                    "target_class": t.target_class,
                    "params": _tree_params(t.params),
                    "features": None if t.features is None else list(t.features),
                    "root": _node_to_dict(t.root),
                }
                for t in per_class
            ]
            for per_class in forest.trees
        ],
    }


def dumps(forest: LhForest) -> str:
    return json.dumps(to_dict(forest), indent=1, allow_nan=False) + "\n"


def save(forest: LhForest, path) -> None:
    Path(path).write_text(dumps(forest), encoding="utf-8")


# -- loading ---------------------------------------------------------------

def _get(d, key, where):
    if not isinstance(d, dict):
        raise ModelFormatError(f"{where}: expected an object")
    if key not in d:
        raise ModelFormatError(f"{where}: missing field {key!r}")
    return d[key]


def _num(v, where, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ModelFormatError(f"{where}: expected a number")
    if integer and not isinstance(v, int):
        raise ModelFormatError(f"{where}: expected an integer")
    if not math.isfinite(v):
        raise ModelFormatError(f"{where}: non-finite number")
    return v


def _vector(v, m, where) -> np.ndarray:
    if not isinstance(v, list) or len(v) != m:
        raise ModelFormatError(f"{where}: expected a list of {m} numbers")
    return np.array([_num(x, where) for x in v], dtype=np.float64)


def _parse_tree_params(d, where) -> TreeParams:
    try:
        return TreeParams(
            alpha=_num(_get(d, "alpha", where), f"{where}.alpha"),
            beta=_num(_get(d, "beta", where), f"{where}.beta"),
            gamma=_num(_get(d, "gamma", where), f"{where}.gamma", integer=True),
            min_samples=_num(_get(d, "min_samples", where), f"{where}.min_samples", integer=True),
            max_depth=_num(_get(d, "max_depth", where), f"{where}.max_depth", integer=True),
        )
    except ModelFormatError:
        raise
    except ValueError as exc:
        raise ModelFormatError(f"{where}: {exc}") from None


def _parse_node(d, m, where):
    kind = _get(d, "node_kind", where)
    if kind == "leaf":
        count = _num(_get(d, "sample_count", where), f"{where}.sample_count", integer=True)
        if count < 1:
            raise ModelFormatError(f"{where}.sample_count: must be positive")
        label_mean = _num(_get(d, "label_mean", where), f"{where}.label_mean")
        if not 0.0 <= label_mean <= 1.0:
            raise ModelFormatError(f"{where}.label_mean: outside [0, 1]")
        return Leaf(LeafModel(
            _vector(_get(d, "slopes", where), m, f"{where}.slopes"),
            _vector(_get(d, "feature_means", where), m, f"{where}.feature_means"),
            float(label_mean),
            count,
        ))
    if kind != "branch":
        raise ModelFormatError(f"{where}: unknown node_kind {kind!r}")
    weights = _vector(_get(d, "weights", where), m, f"{where}.weights")
    if np.any(np.abs(weights) > 1.0):
        raise ModelFormatError(f"{where}.weights: magnitude above 1")
    selected = _get(d, "selected", where)
    if not isinstance(selected, list) or any(
        isinstance(i, bool) or not isinstance(i, int) or not 0 <= i < m for i in selected
    ):
        raise ModelFormatError(f"{where}.selected: expected feature indices in 0..{m - 1}")
    sd_max = _num(_get(d, "sd_max", where), f"{where}.sd_max")
    case = _get(d, "chosen_case", where)
    try:
        case = SplitCase(case)
    except ValueError:
        raise ModelFormatError(f"{where}.chosen_case: unknown case {case!r}") from None
    inclusive = _get(d, "left_inclusive", where)
    if not isinstance(inclusive, bool):
        raise ModelFormatError(f"{where}.left_inclusive: expected true/false")
    plan = SplitPlan(
        FeatureWeights(weights, tuple(selected), _vector(_get(d, "sd", where), m, f"{where}.sd"), float(sd_max)),
        float(_num(_get(d, "threshold", where), f"{where}.threshold")),
        inclusive,
        case,
    )
    return Branch(
        plan,
        _parse_node(_get(d, "left", where), m, where + "L"),
        _parse_node(_get(d, "right", where), m, where + "R"),
    )


def from_dict(doc) -> LhForest:
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelFormatError("not a model file: missing format_version")
    version = doc["format_version"]
    if version != FORMAT_VERSION or isinstance(version, bool):
        raise ModelVersionError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    m = _num(_get(doc, "m", "model"), "model.m", integer=True)
    if m < 1:
        raise ModelFormatError("model.m: must be positive")
    p = _get(doc, "params", "model")
    fraction = _get(p, "feature_fraction", "params")
    try:
        params = ForestParams(
            trees_per_class=_num(_get(p, "trees_per_class", "params"), "params.trees_per_class", integer=True),
            beta_prime=_num(_get(p, "beta_prime", "params"), "params.beta_prime"),
            forest_rate=_num(_get(p, "forest_rate", "params"), "params.forest_rate"),
            base=_parse_tree_params(_get(p, "base", "params"), "params.base"),
            seed=_num(_get(p, "seed", "params"), "params.seed", integer=True),
            feature_fraction=None if fraction is None else _num(fraction, "params.feature_fraction"),
        )
    except ModelFormatError:
        raise
    except ValueError as exc:
        raise ModelFormatError(f"params: {exc}") from None
    norm = _get(doc, "normalizer", "model")
    normalizer = None
    if norm is not None:
        lo = _vector(_get(norm, "mins", "normalizer"), m, "normalizer.mins")
        hi = _vector(_get(norm, "maxs", "normalizer"), m, "normalizer.maxs")
        if np.any(lo > hi):
            raise ModelFormatError("normalizer: min above max")
        normalizer = NormalizationStats(lo, hi)
    labels = _get(doc, "label_mapping", "model")
    if not isinstance(labels, list) or not all(isinstance(s, str) for s in labels):
        raise ModelFormatError("label_mapping: expected a list of strings")
    names = doc.get("feature_names")
    if names is not None and (not isinstance(names, list) or len(names) != m
                              or not all(isinstance(s, str) for s in names)):
        raise ModelFormatError(f"feature_names: expected {m} strings or null")
    classes = _get(doc, "classes", "model")
    if not isinstance(classes, list) or len(classes) != len(labels) or len(classes) < 2:
        raise ModelFormatError("classes: expected one tree list per label (at least two)")
    trees = []
    for c, per_class in enumerate(classes):
        if not isinstance(per_class, list) or len(per_class) != params.trees_per_class:
            raise ModelFormatError(f"classes[{c}]: expected {params.trees_per_class} trees")
        built = []
        for i, t in enumerate(per_class):
            where = f"classes[{c}][{i}]"
            target = _get(t, "target_class", where)
            if target != c or isinstance(target, bool):
                raise ModelFormatError(f"{where}.target_class: expected {c}")
            feats = _get(t, "features", where)
            if feats is not None and (not isinstance(feats, list) or any(
                    isinstance(j, bool) or not isinstance(j, int) or not 0 <= j < m for j in feats)):
                raise ModelFormatError(f"{where}.features: expected feature indices or null")
            root = _parse_node(_get(t, "root", where), m, f"{where}.root/")
            built.append(LhTree(root, c, _parse_tree_params(_get(t, "params", where), f"{where}.params"),
                                m, None if feats is None else tuple(feats)))
        trees.append(tuple(built))
    return LhForest(tuple(trees), tuple(labels), normalizer, params, m,
                    None if names is None else tuple(names))


def loads(text: str) -> LhForest:
    try:
        return from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"corrupt or truncated model file: {exc}") from None
    except RecursionError:
        raise ModelFormatError("model nesting too deep") from None


def load(path) -> LhForest:
    return loads(Path(path).read_text(encoding="utf-8"))
