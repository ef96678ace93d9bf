import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from landslide_xai.errors import DropCountOutOfRange, NonPositiveCover, TooManyFeatures
from landslide_xai.explain import (
    FeatureImportance,
    ShapMatrix,
    brute_force_shap,
    coalition_values,
    expected_value,
    rank_features,
    select_features,
    summary_points,
    tree_shap,
    write_importance_json,
    write_shap_csv,
)
from landslide_xai.gbt import GbtModel, GbtParams, Tree, fit

from .helpers import random_ensemble


def arr(*v, dtype=float):
    return np.array(v, dtype=dtype)


def stump_model():
    tree = Tree(arr(0, -1, -1, dtype=np.int64), arr(0.0, 0, 0), arr(1, -1, -1, dtype=np.int64),
                arr(2, -1, -1, dtype=np.int64), arr(0.0, -1.0, 2.0), arr(100.0, 30.0, 70.0))
    return GbtModel((tree,), 0.0, GbtParams(learning_rate=1.0), ("a", "b"))


def interaction_model():
    # f0 < 0.5 -> 0; otherwise f1 < 0.5 -> 0 else 4; equal covers on both sides
    tree = Tree(arr(0, -1, 1, -1, -1, dtype=np.int64), arr(0.5, 0, 0.5, 0, 0),
                arr(1, -1, 3, -1, -1, dtype=np.int64), arr(2, -1, 4, -1, -1, dtype=np.int64),
                arr(0.0, 0.0, 0.0, 0.0, 4.0), arr(100.0, 50.0, 50.0, 25.0, 25.0))
    return GbtModel((tree,), 0.0, GbtParams(learning_rate=1.0), ("f0", "f1"))


def test_stump_by_hand():
    m = stump_model()
    s = tree_shap(m, np.array([[1.0, 5.0], [-1.0, 5.0]]))
    assert_allclose(s.expected_value, 0.3 * -1 + 0.7 * 2)
    assert_allclose(s.values, [[0.9, 0.0], [-2.1, 0.0]], atol=1e-12)


def test_interaction_split_evenly():
    m = interaction_model()
    x = np.array([[1.0, 1.0]])
    assert_allclose(coalition_values(m, x), [1.0, 2.0, 2.0, 4.0])
    assert_allclose(tree_shap(m, x).values, [[1.5, 1.5]], atol=1e-12)
    assert_allclose(brute_force_shap(m, x), [1.5, 1.5], atol=1e-12)


@pytest.mark.parametrize("seed", range(30))
def test_tree_shap_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    m = random_ensemble(rng)
    X = rng.normal(size=(5, len(m.feature_names)))
    s = tree_shap(m, X)
    for r in range(5):
        assert_allclose(s.values[r], brute_force_shap(m, X[r]), atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_local_accuracy(seed):
    rng = np.random.default_rng(seed)
    m = random_ensemble(rng)
    X = rng.normal(size=(8, len(m.feature_names)))
    s = tree_shap(m, X)
    assert_allclose(s.expected_value + s.values.sum(axis=1), m.predict_margin(X), atol=1e-9)


def test_unused_feature_gets_zero(surrogate):
    m = fit(surrogate.select(["SLOPE", "TWI", "ROAD"]), GbtParams(max_depth=1, n_estimators=1))
    s = tree_shap(m, surrogate.select(["SLOPE", "TWI", "ROAD"]))
    used = m.trees[0].feature[0]
    for j in range(3):
        if j != used:
            assert np.all(s.values[:, j] == 0.0)


def test_single_leaf_and_empty_models():
    m = GbtModel((Tree.leaf(0.7),), 0.2, GbtParams(learning_rate=0.5), ("a", "b", "c"))
    s = tree_shap(m, np.ones((4, 3)))
    assert np.all(s.values == 0.0)
    assert_allclose(s.expected_value, 0.2 + 0.35)
    empty = GbtModel((), -0.4, GbtParams(), ("a",))
    assert_allclose(tree_shap(empty, np.zeros((2, 1))).expected_value, -0.4)


def test_expected_value_is_cover_weighted_mean():
    assert_allclose(expected_value(interaction_model()), 1.0)


def test_nonpositive_cover_rejected():
    m = stump_model()
    t = m.trees[0]
    bad = Tree(t.feature, t.threshold, t.left, t.right, t.value, arr(30.0, 30.0, 0.0))
    broken = GbtModel((bad,), 0.0, m.params, m.feature_names)
    with pytest.raises(NonPositiveCover):
        tree_shap(broken, np.zeros((1, 2)))
    with pytest.raises(NonPositiveCover):
        brute_force_shap(broken, np.zeros(2))


def test_brute_force_feature_limit():
    names = tuple(f"f{j}" for j in range(21))
    m = GbtModel((Tree.leaf(0.0),), 0.0, GbtParams(), names)
    with pytest.raises(TooManyFeatures):
        brute_force_shap(m, np.zeros(21))


def test_ranking_is_stable_on_ties():
    s = ShapMatrix(np.array([[1.0, -2.0, 1.0], [-1.0, 2.0, -1.0]]), 0.0, ("a", "b", "c"))
    imp = rank_features(s)
    assert imp.ranking == ["b", "a", "c"]
    assert imp.mean_abs == (1.0, 2.0, 1.0)
    assert imp.rank_of("c") == 3
    back = FeatureImportance.from_dict(json.loads(json.dumps(imp.to_dict())))
    assert back.ranking == imp.ranking


def test_summary_points():
    s = ShapMatrix(np.array([[0.1, -0.5], [0.2, 0.5], [0.3, 0.0]]), 0.0, ("a", "b"))
    X = np.array([[7.0, 0.0], [7.0, 5.0], [7.0, 10.0]])
    pts = summary_points(s, X)
    assert len(pts) == 6
    assert [p.feature for p in pts] == ["b"] * 3 + ["a"] * 3
    assert [p.value for p in pts[:3]] == [0.0, 0.5, 1.0]
    # constant column maps to the middle of the color scale
    assert all(p.value == 0.5 for p in pts[3:])
    with pytest.raises(ValueError):
        summary_points(s, X[:2])


def test_select_features():
    imp = FeatureImportance(("a", "b", "c", "d"), (0.4, 0.1, 0.3, 0.2), (0, 2, 3, 1))
    plan = select_features(imp, 2, ("a", "b", "c", "d"))
    assert plan.dropped == ("d", "b")
    assert plan.retained == ("a", "c")
    assert select_features(imp, 0).retained == ("a", "c", "d", "b")
    for bad in (-1, 4):
        with pytest.raises(DropCountOutOfRange):
            select_features(imp, bad)


def test_exports(tmp_path):
    rng = np.random.default_rng(3)
    m = random_ensemble(rng, m=4)
    X = rng.normal(size=(6, 4))
    s = tree_shap(m, X)
    write_shap_csv(tmp_path / "shap.csv", summary_points(s, X))
    rows = list(csv.reader((tmp_path / "shap.csv").open()))
    assert rows[0] == ["row", "feature", "rank", "shap", "normalized_value"]
    assert len(rows) - 1 == 6 * 4
    write_importance_json(tmp_path / "imp.json", rank_features(s), s)
    d = json.loads((tmp_path / "imp.json").read_text())
    assert [e["rank"] for e in d["ranking"]] == [1, 2, 3, 4]
    assert d["expected_value"] == s.expected_value


def test_surrogate_slope_ranks_high(surrogate):
    m = fit(surrogate, GbtParams(max_depth=3, n_estimators=200))
    imp = rank_features(tree_shap(m, surrogate))
    assert imp.rank_of("SLOPE") <= 4
    s = tree_shap(m, surrogate.X[:3])
    assert_array_equal(s.values, tree_shap(m, surrogate.X[:3]).values)
