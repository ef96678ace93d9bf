import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from landslide_xai.errors import SchemaMismatch, SingleClassTrain
from landslide_xai.gbt import (
    GbtModel,
    GbtParams,
    Tree,
    cover,
    fit,
    gain,
    leaf_output,
    logloss,
    predict_label,
    predict_margin,
    predict_proba,
    sigmoid,
    similarity_score,
)

from .helpers import make_table, random_ensemble, separable_table, xor_table


def accuracy(model, table):
    return float(np.mean(model.predict_label(table) == table.y))


def test_similarity_examples():
    assert similarity_score(np.zeros(4), np.full(4, 0.25)) == 0.0
    c = cover(np.full(3, 0.5))
    assert_allclose(c, [0.25, 0.25, 0.25])
    assert_allclose(similarity_score([0.5, -0.5, 0.5], c, 1.0), 0.25 / 1.75, rtol=1e-12)
    assert_allclose(similarity_score([0.3], [0.2], 0.0), 0.09 / 0.2)


def test_gain_examples():
    assert gain(0.7, 0.0, 0.7) == 0.0
    assert_allclose(gain(0.9, 0.4, 0.5), 0.8)


def test_leaf_output():
    assert_allclose(leaf_output([0.5, 0.5], [0.25, 0.25], 1.0), 1.0 / 1.5)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=20), st.floats(0, 10), st.floats(0, 10))
def test_larger_lambda_shrinks_leaf_outputs(res, lam_a, lam_b):
    lo, hi = sorted((lam_a, lam_b))
    c = np.full(len(res), 0.25)
    assert abs(leaf_output(res, c, hi)) <= abs(leaf_output(res, c, lo)) + 1e-15


def test_sigmoid_is_stable():
    assert_allclose(sigmoid([-800.0, 0.0, 800.0]), [0.0, 0.5, 1.0])


def test_params_validation():
    for bad in (dict(max_depth=0), dict(n_estimators=0), dict(learning_rate=0),
                dict(gamma=-1), dict(subsample=0), dict(subsample=1.5)):
        with pytest.raises(ValueError):
            GbtParams(**bad)


def test_final_model_defaults():
    p = GbtParams()
    assert (p.max_depth, p.n_estimators, p.learning_rate, p.gamma, p.subsample) == (3, 1500, 0.1, 0, 1)
    assert p.reg_lambda == 1.0


def test_separable_reaches_full_accuracy_within_50_rounds():
    t = separable_table(n=200, seed=4)
    m = fit(t, GbtParams(max_depth=3, n_estimators=50, learning_rate=0.3))
    assert accuracy(m, t) == 1.0


def test_xor_needs_depth_two():
    t = xor_table()
    deep = fit(t, GbtParams(max_depth=2, n_estimators=200, learning_rate=0.1))
    shallow = fit(t, GbtParams(max_depth=1, n_estimators=200, learning_rate=0.1))
    assert accuracy(deep, t) == 1.0
    assert accuracy(shallow, t) < 1.0


@pytest.mark.parametrize("seed", range(1, 6))
def test_single_depth_one_tree_on_xor(seed):
    t = xor_table(seed=seed)
    m = fit(t, GbtParams(max_depth=1, n_estimators=1))
    assert accuracy(m, t) <= 0.75


def test_stump_ensemble_on_corner_xor_is_bounded():
    # A sum of stumps is additive in x0 and x1, so on the four exact corners
    # it must misclassify at least one whole cell: accuracy <= 1 - 25/101.
    X = np.repeat(np.array([[0, 0], [0, 1], [1, 0], [1, 1]], float), [26, 25, 25, 25], axis=0)
    t = make_table(X, (X[:, 0] != X[:, 1]).astype(int))
    for n in (1, 10, 200):
        assert accuracy(fit(t, GbtParams(max_depth=1, n_estimators=n)), t) <= 76 / 101
    # the 26-row corner gives the root split positive gain, and depth 2 finishes the job
    assert accuracy(fit(t, GbtParams(max_depth=2, n_estimators=10)), t) == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_training_logloss_non_increasing(seed):
    t = separable_table(n=150, m=3, margin=0.1, seed=seed)
    m = fit(t, GbtParams(max_depth=3, n_estimators=60, learning_rate=0.3))
    losses = [logloss(t.y, z) for z in m.staged_margin(t)]
    assert np.all(np.diff(losses) <= 1e-12)


def test_root_split_matches_exhaustive_search():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(40, 3))
    y = (X[:, 1] + 0.5 * rng.normal(size=40) > 0).astype(int)
    t = make_table(X, y)
    m = fit(t, GbtParams(max_depth=1, n_estimators=1, min_child_weight=0.0))
    p = np.full(40, y.mean())
    r, c = y - p, cover(p)
    root = similarity_score(r, c)
    best = (-np.inf, None, None)
    for j in range(3):
        xs = np.unique(X[:, j])
        for thr in (xs[1:] + xs[:-1]) / 2:
            left = X[:, j] < thr
            g = gain(similarity_score(r[left], c[left]), similarity_score(r[~left], c[~left]), root)
            if g > best[0] + 1e-12:
                best = (g, j, thr)
    tree = m.trees[0]
    assert tree.feature[0] == best[1]
    assert_allclose(tree.threshold[0], best[2])


def test_covers_add_up(surrogate):
    m = fit(surrogate, GbtParams(max_depth=4, n_estimators=30, subsample=0.7))
    for t in m.trees:
        for k in range(t.n_nodes):
            if not t.is_leaf(k):
                assert t.cover[k] > 0
                assert_allclose(t.cover[k], t.cover[t.left[k]] + t.cover[t.right[k]], rtol=1e-12)
        assert t.depth() <= 4


def test_infinite_gamma_gives_base_rate():
    t = separable_table(seed=2)
    m = fit(t, GbtParams(max_depth=3, n_estimators=5, gamma=math.inf))
    assert all(tr.n_nodes == 1 for tr in m.trees)
    assert_allclose(m.predict_margin(t), np.log(t.y.mean() / (1 - t.y.mean())), atol=1e-12)


def test_zero_gamma_keeps_positive_gain_split():
    t = make_table([[0.0], [1.0], [2.0], [3.0]] * 5, [0, 0, 1, 1] * 5)
    m = fit(t, GbtParams(max_depth=1, n_estimators=1, gamma=0.0))
    assert m.trees[0].feature[0] == 0
    assert_allclose(m.trees[0].threshold[0], 1.5)


def test_single_class_rejected():
    with pytest.raises(SingleClassTrain):
        fit(make_table([[0.0], [1.0]], [1, 1]))


def test_empty_and_single_leaf_models():
    t = make_table([[0.0], [1.0]], [0, 1])
    empty = GbtModel((), 0.3, GbtParams(), ("x0",))
    assert_allclose(predict_margin(empty, t), [0.3, 0.3])
    one = GbtModel((Tree.leaf(2.0),), 0.3, GbtParams(learning_rate=0.5), ("x0",))
    assert_allclose(predict_margin(one, t), [1.3, 1.3])
    assert_allclose(predict_proba(one, t), sigmoid([1.3, 1.3]))
    assert_array_equal(predict_label(one, t), [1, 1])


def naive_margin(model, x):
    total = model.base_margin
    for t in model.trees:
        k = 0
        while t.feature[k] >= 0:
            k = t.left[k] if x[t.feature[k]] < t.threshold[k] else t.right[k]
        total += model.params.learning_rate * t.value[k]
    return total


@pytest.mark.parametrize("seed", range(10))
def test_margin_equals_naive_walk(seed):
    rng = np.random.default_rng(seed)
    m = random_ensemble(rng)
    X = rng.normal(size=(25, len(m.feature_names)))
    assert_allclose(m.predict_margin(X), [naive_margin(m, x) for x in X], atol=1e-12)
    staged = list(m.staged_margin(X))
    assert len(staged) == len(m.trees) + 1
    assert_allclose(staged[-1], m.predict_margin(X), atol=1e-12)


def test_schema_mismatch(surrogate):
    m = fit(surrogate, GbtParams(n_estimators=2))
    with pytest.raises(SchemaMismatch):
        m.predict_margin(np.zeros((3, 4)))
    with pytest.raises(SchemaMismatch):
        m.predict_margin(surrogate.select(["SLOPE", "TWI"]))


def test_label_threshold_matches_proba(surrogate):
    m = fit(surrogate, GbtParams(n_estimators=20))
    assert_array_equal(m.predict_label(surrogate), (m.predict_proba(surrogate) >= 0.5).astype(int))


def test_deterministic_serialization(surrogate):
    p = GbtParams(max_depth=3, n_estimators=25, subsample=0.7, seed=4)
    a, b = fit(surrogate, p), fit(surrogate, p)
    assert a.to_json() == b.to_json()
    c = fit(surrogate, GbtParams(max_depth=3, n_estimators=25, subsample=0.7, seed=5))
    assert c.to_json() != a.to_json()


def test_json_round_trip(surrogate):
    m = fit(surrogate, GbtParams(max_depth=3, n_estimators=10))
    d = json.loads(m.to_json())
    assert d["kind"] == "gbt"
    root = d["trees"][0]
    assert set(root) == {"feature", "threshold", "cover", "left", "right"}
    back = GbtModel.from_dict(d)
    assert_allclose(back.predict_margin(surrogate), m.predict_margin(surrogate), atol=0)
    assert back.to_json() == m.to_json()


def test_prefix_of_longer_fit_equals_shorter_fit(surrogate):
    p = GbtParams(max_depth=2, n_estimators=30, subsample=0.8, seed=9)
    long = fit(surrogate, p)
    short = fit(surrogate, GbtParams(max_depth=2, n_estimators=12, subsample=0.8, seed=9))
    for a, b in zip(long.trees[:12], short.trees):
        assert a.to_dict() == b.to_dict()
