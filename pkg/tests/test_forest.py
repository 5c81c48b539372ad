from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lht import model_io
from lht.dataset import Dataset, NormalizationStats
from lht.forest import (
    ForestParams,
    LhForest,
    evaluate,
    predict_batch,
    score,
    score_matrix,
    train_forest,
)
from lht.tree import Leaf, LeafModel, LhTree, TreeParams

from conftest import blobs


def const_tree(c, value, m=2):
    return LhTree(Leaf(LeafModel(np.zeros(m), np.zeros(m), value, 1)), c, TreeParams(), m)


def const_forest(values_per_class, m=2):
    trees = tuple(tuple(const_tree(c, v, m) for v in vals) for c, vals in enumerate(values_per_class))
    t = len(values_per_class[0])
    return LhForest(trees, tuple(str(c) for c in range(len(trees))), None,
                    ForestParams(trees_per_class=t), m)


def test_beta_schedule():
    assert ForestParams(trees_per_class=4, beta_prime=0.8).betas() == pytest.approx((0, 0.2, 0.4, 0.6))
    assert ForestParams(trees_per_class=2, beta_prime=0.8).betas() == pytest.approx((0, 0.4))
    assert ForestParams(trees_per_class=1, beta_prime=0.25).betas() == (0.25,)


@pytest.mark.parametrize("bad", [
    {"trees_per_class": 0}, {"beta_prime": 1.1}, {"forest_rate": 0.0},
    {"feature_fraction": 0.0}, {"seed": -1},
])
def test_params_validation(bad):
    with pytest.raises(ValueError):
        ForestParams(**bad)


def test_degenerate_forest_shape():
    d = blobs(k=3)
    f = train_forest(d, ForestParams())
    assert f.k == 3 and all(len(ts) == 1 for ts in f.trees)
    assert all(t.params.beta == 0.0 for ts in f.trees for t in ts)


def test_forest_tree_counts_and_betas():
    d = blobs(k=2)
    f = train_forest(d, ForestParams(trees_per_class=2, beta_prime=0.8))
    assert [len(ts) for ts in f.trees] == [2, 2]
    assert [t.params.beta for t in f.trees[0]] == pytest.approx([0.0, 0.4])


def test_unanimous_scores():
    s = score(const_forest([[1.0], [0.0]]), np.zeros(2))
    assert s.predicted == 0 and s.margin == 1.0


def test_tie_goes_to_smallest_class():
    s = score(const_forest([[0.5], [0.5]]), np.zeros(2))
    assert s.predicted == 0 and s.margin == 0.0


def test_scores_are_tree_means():
    f = const_forest([[0.2, 0.8], [0.1, 0.1]])
    assert score(f, np.zeros(2)).scores[0] == pytest.approx(0.5)


def test_empty_batch():
    p = predict_batch(const_forest([[1.0], [0.0]]), np.zeros((0, 2)))
    assert len(p) == 0 and p.scores.shape == (0, 2)


def test_batch_of_one_equals_score(toy):
    f = train_forest(toy, ForestParams())
    x = toy.features[5]
    assert np.array_equal(predict_batch(f, x[None, :]).scores[0], score(f, x).scores)


def test_permutation_equivariance():
    d = blobs(n_per_class=30, k=3, spread=1.5, seed=2)
    f = train_forest(d, ForestParams(trees_per_class=3, beta_prime=0.5, forest_rate=0.7))
    perm = np.random.default_rng(0).permutation(d.n)
    a = predict_batch(f, d.features)
    b = predict_batch(f, d.features[perm])
    assert np.array_equal(a.scores[perm], b.scores)
    assert np.array_equal(a.predicted[perm], b.predicted)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        score(const_forest([[1.0], [0.0]]), np.zeros(3))


def test_evaluate_perfect_and_constant():
    d = Dataset.from_arrays(np.zeros((4, 2)), [0, 1, 0, 1])
    ev = evaluate(const_forest([[1.0], [0.0]]), d)
    assert ev.accuracy == 0.5
    assert ev.confusion.tolist() == [[2, 0], [2, 0]]
    d = blobs(spread=10.0)
    assert evaluate(train_forest(d, ForestParams()), d).accuracy == 1.0


def test_training_is_deterministic():
    d = blobs(n_per_class=40, k=3, spread=1.0, seed=5)
    p = ForestParams(trees_per_class=4, beta_prime=0.6, forest_rate=0.6, feature_fraction=0.7, seed=9)
    a, b = train_forest(d, p), train_forest(d, p)
    assert model_io.dumps(a) == model_io.dumps(b)


def test_seed_changes_subsamples():
    d = blobs(n_per_class=40, k=2, spread=1.0, seed=5)
    p = ForestParams(trees_per_class=2, forest_rate=0.5)
    a = train_forest(d, p)
    b = train_forest(d, replace(p, seed=1))
    assert model_io.dumps(a) != model_io.dumps(b)


def test_feature_fraction_restricts_weights():
    d = blobs(n_per_class=30, k=2, m=6, spread=1.0)
    f = train_forest(d, ForestParams(trees_per_class=3, feature_fraction=0.5))
    for t in f.trees[0]:
        assert len(t.features) == 3
        allowed = np.zeros(6, bool)
        allowed[list(t.features)] = True
        from lht.tree import Branch, iter_nodes
        for _, node, _ in iter_nodes(t.root):
            w = node.plan.weights.weights if isinstance(node, Branch) else node.model.slopes
            assert not w[~allowed].any()


def test_normalizer_stored_and_used():
    d = blobs(spread=5.0)
    f = train_forest(d, ForestParams())
    assert isinstance(f.normalizer, NormalizationStats)
    g = train_forest(d, ForestParams(), normalize=False)
    assert g.normalizer is None
    # scaling the raw data does not change normalized predictions
    scaled = Dataset(d.features * 1000 + 7, d.labels, d.k)
    h = train_forest(scaled, ForestParams())
    assert np.array_equal(predict_batch(f, d).predicted, predict_batch(h, scaled).predicted)


def test_missing_class_rejected():
    d = Dataset(np.zeros((3, 1)), np.array([0, 0, 1]), 3)
    with pytest.raises(ValueError):
        train_forest(d, ForestParams())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_two_class_symmetry(seed):
    # swapping the labels of a 2-class problem swaps the score columns;
    # only rows with a strict winner are compared since ties go to class 0
    d = blobs(n_per_class=25, k=2, spread=1.0, seed=seed)
    swapped = Dataset(d.features, 1 - d.labels, 2)
    a = score_matrix(train_forest(d, ForestParams()), d)
    b = score_matrix(train_forest(swapped, ForestParams()), d)
    assert np.array_equal(a, b[:, ::-1])
    strict = a[:, 0] != a[:, 1]
    assert np.array_equal(a[strict].argmax(1), 1 - b[strict].argmax(1))
