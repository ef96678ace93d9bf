import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal

from landslide_xai.dataset import (
    CATEGORICAL,
    LANDSLIDE_FACTORS,
    SURROGATE_INFORMATIVE,
    SURROGATE_NOISE,
    DataTable,
    FeatureSchema,
    SplitSpec,
    TrainTestSplit,
    infer_schema,
    load_csv,
    make_surrogate,
    quantile_bin,
    stratified_split,
    stratified_subsample,
    write_csv,
)
from landslide_xai.errors import (
    DegenerateClass,
    EmptyFile,
    InvalidLabel,
    MissingColumn,
    MissingValue,
    NonNumericCell,
    SchemaMismatch,
    TooFewDistinctValues,
)

from .helpers import make_table


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_default_schema_lists_the_fifteen_factors():
    s = FeatureSchema.default()
    assert s.names == ("PROFILE", "PLAN", "CHANGE", "LANDUSE", "ELEVATION", "SLOPE", "ASPECT",
                       "TWI", "SPI", "DRAINAGE", "NDVI", "RAINFALL", "FAULTLINES", "ROAD",
                       "GEOLOGY")
    assert s.label_name == "LABEL"
    assert s.kind("GEOLOGY") == CATEGORICAL


@pytest.mark.parametrize("names,label", [
    (("a", "a"), "y"),
    (("a", ""), "y"),
    (("a", "y"), "y"),
    ((), "y"),
])
def test_schema_rejects_bad_names(names, label):
    with pytest.raises(ValueError):
        FeatureSchema(names, label)


def test_schema_round_trip():
    s = FeatureSchema.default()
    assert FeatureSchema.from_dict(json.loads(json.dumps(s.to_dict()))) == s


def test_load_small_file(tmp_path):
    p = write(tmp_path, "a,b,LABEL\n1,2,0\n3,4,1\n5,6,0\n7,8.5,1\n")
    t = load_csv(p, FeatureSchema(("a", "b")))
    assert (t.n, t.m) == (4, 2)
    assert_array_equal(t.y, [0, 1, 0, 1])
    assert t.X[3, 1] == 8.5


def test_load_matches_columns_by_name_and_ignores_extras(tmp_path):
    p = write(tmp_path, "id,b,LABEL,a\n9,2,0,1\n9,4,1,3\n")
    t = load_csv(p, FeatureSchema(("a", "b")))
    assert_array_equal(t.X, [[1, 2], [3, 4]])


def test_blank_cell_is_missing_value(tmp_path):
    p = write(tmp_path, "a,b,LABEL\n1,2,0\n3,,1\n")
    with pytest.raises(MissingValue, match="row 2.*'b'"):
        load_csv(p, FeatureSchema(("a", "b")))


def test_load_errors(tmp_path):
    schema = FeatureSchema(("a", "b"))
    with pytest.raises(MissingColumn, match="'b'"):
        load_csv(write(tmp_path, "a,LABEL\n1,0\n"), schema)
    with pytest.raises(NonNumericCell, match="row 1.*'a'.*'x'"):
        load_csv(write(tmp_path, "a,b,LABEL\nx,2,0\n"), schema)
    with pytest.raises(EmptyFile):
        load_csv(write(tmp_path, ""), schema)
    with pytest.raises(EmptyFile):
        load_csv(write(tmp_path, "a,b,LABEL\n"), schema)
    with pytest.raises(InvalidLabel, match="row 2"):
        load_csv(write(tmp_path, "a,b,LABEL\n1,2,0\n1,2,2\n"), schema)


def test_table_is_read_only():
    t = make_table([[1.0], [2.0]], [0, 1])
    with pytest.raises(ValueError):
        t.X[0, 0] = 5.0
    with pytest.raises(SchemaMismatch):
        DataTable(FeatureSchema(("a", "b")), np.zeros((2, 1)), [0, 1])
    with pytest.raises(MissingValue):
        DataTable(FeatureSchema(("a",)), [[np.nan], [1.0]], [0, 1])


def test_csv_round_trip(tmp_path, surrogate):
    p = tmp_path / "s.csv"
    write_csv(surrogate, p)
    schema = infer_schema(p)
    assert schema == FeatureSchema.default()
    back = load_csv(p, schema)
    assert_array_equal(back.X, surrogate.X)
    assert_array_equal(back.y, surrogate.y)


def test_split_of_392_balanced_rows(surrogate):
    sp = stratified_split(surrogate, SplitSpec())
    assert sp.test.n == 130 and sp.train.n == 262
    assert sp.test.class_counts() == (65, 65)
    assert sp.train.class_counts() == (131, 131)


def test_split_of_four_rows():
    t = make_table([[0.0], [1.0], [2.0], [3.0]], [0, 1, 0, 1])
    sp = stratified_split(t, SplitSpec(0.5, seed=3))
    assert sp.train.class_counts() == (1, 1)
    assert sp.test.class_counts() == (1, 1)


def test_split_is_deterministic_and_serializable(surrogate):
    a = stratified_split(surrogate, SplitSpec(seed=7))
    b = stratified_split(surrogate, SplitSpec(seed=7))
    assert_array_equal(a.test_indices, b.test_indices)
    c = TrainTestSplit.from_dict(surrogate, json.loads(a.to_json()))
    assert_array_equal(c.train.X, a.train.X)
    d = stratified_split(surrogate, SplitSpec(seed=8))
    assert not np.array_equal(a.test_indices, d.test_indices)


def test_split_rejects_empty_side():
    t = make_table([[0.0], [1.0], [2.0]], [0, 0, 1])
    with pytest.raises(DegenerateClass):
        stratified_split(t, SplitSpec(0.33))
    with pytest.raises(DegenerateClass):
        stratified_split(make_table([[0.0], [1.0]], [0, 0]), SplitSpec(0.5))


@settings(max_examples=60, deadline=None)
@given(n0=st.integers(2, 60), n1=st.integers(2, 60),
       frac=st.floats(0.1, 0.9), seed=st.integers(0, 2**31))
def test_split_partitions_and_stratifies(n0, n1, frac, seed):
    y = np.r_[np.zeros(n0, int), np.ones(n1, int)]
    rng = np.random.default_rng(seed)
    y = y[rng.permutation(y.size)]
    t = make_table(np.arange(y.size, dtype=float), y)
    try:
        sp = stratified_split(t, SplitSpec(frac, seed))
    except DegenerateClass:
        return
    both = np.r_[sp.train_indices, sp.test_indices]
    assert_array_equal(np.sort(both), np.arange(y.size))
    for c, count in enumerate((n0, n1)):
        assert abs(sp.test.class_counts()[c] - count * frac) <= 1
    if n0 == n1:
        a, b = sp.test.class_counts()
        assert abs(a - b) <= 1


def test_subsample(surrogate):
    idx = stratified_subsample(surrogate, 0.25, seed=1)
    sub = surrogate.take(idx)
    assert sub.class_counts() == (49, 49)
    assert_array_equal(stratified_subsample(surrogate, 1.0, 0), np.arange(392))


def test_quantile_bin_median_split():
    assert_array_equal(quantile_bin([1, 2, 3, 4], 2), [0, 0, 1, 1])


def test_quantile_bin_constant():
    with pytest.raises(TooFewDistinctValues):
        quantile_bin([3.0] * 10, 4)


def test_quantile_bin_deciles_of_uniform_sample():
    x = np.random.default_rng(0).uniform(size=1000)
    counts = np.bincount(quantile_bin(x, 10), minlength=10)
    # oracle: sort and cut into ten slices of 100
    order = np.argsort(x)
    expected = np.empty(1000, int)
    expected[order] = np.arange(1000) // 100
    assert np.all(np.abs(counts - 100) <= 1)
    assert np.mean(quantile_bin(x, 10) == expected) > 0.99


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=4, max_size=80), st.integers(2, 4))
def test_quantile_bin_is_monotone(values, k):
    x = np.array(values)
    if np.unique(x).size < 2:
        return
    b = quantile_bin(x, k)
    assert b.min() >= 0 and b.max() < k
    order = np.argsort(x, kind="stable")
    assert np.all(np.diff(b[order]) >= 0)


def test_surrogate_shape_and_planted_signal():
    t = make_surrogate()
    assert (t.n, t.m) == (392, 15)
    assert t.class_counts() == (196, 196)
    assert t.feature_names == LANDSLIDE_FACTORS
    assert len(SURROGATE_INFORMATIVE) == 9 and len(SURROGATE_NOISE) == 6
    assert_array_equal(make_surrogate().X, t.X)
