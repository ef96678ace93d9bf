"""Loading, validating, splitting and discretizing the tabular landslide data."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateClass,
    EmptyFile,
    InvalidLabel,
    MissingColumn,
    MissingValue,
    NonNumericCell,
    SchemaMismatch,
    TooFewDistinctValues,
)

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"

LANDSLIDE_FACTORS = (
    "PROFILE", "PLAN", "CHANGE", "LANDUSE", "ELEVATION", "SLOPE", "ASPECT",
    "TWI", "SPI", "DRAINAGE", "NDVI", "RAINFALL", "FAULTLINES", "ROAD", "GEOLOGY",
)
# class-coded rasters in the source data; everything else is a measurement
CATEGORICAL_FACTORS = ("CHANGE", "LANDUSE", "GEOLOGY")
DEFAULT_LABEL = "LABEL"


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple
    label_name: str = DEFAULT_LABEL
    kinds: tuple = None

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        object.__setattr__(self, "names", names)
        if not names:
            raise ValueError("schema needs at least one feature")
        if any(not n for n in names) or len(set(names)) != len(names):
            raise ValueError(f"feature names must be unique and nonempty: {names}")
        if not self.label_name or self.label_name in names:
            raise ValueError(f"label name {self.label_name!r} collides with a feature")
        kinds = self.kinds
        if kinds is None:
            kinds = (CONTINUOUS,) * len(names)
        kinds = tuple(kinds)
        if len(kinds) != len(names) or set(kinds) - {CONTINUOUS, CATEGORICAL}:
            raise ValueError(f"bad feature kinds {kinds}")
        object.__setattr__(self, "kinds", kinds)

    @classmethod
    def default(cls) -> "FeatureSchema":
        kinds = tuple(CATEGORICAL if n in CATEGORICAL_FACTORS else CONTINUOUS
                      for n in LANDSLIDE_FACTORS)
        return cls(LANDSLIDE_FACTORS, DEFAULT_LABEL, kinds)

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def kind(self, name: str) -> str:
        return self.kinds[self.index(name)]

    def subset(self, names) -> "FeatureSchema":
        missing = [n for n in names if n not in self.names]
        if missing:
            raise SchemaMismatch(f"unknown features {missing}")
        return FeatureSchema(tuple(names), self.label_name,
                             tuple(self.kind(n) for n in names))

    def to_dict(self) -> dict:
        return {"names": list(self.names), "label_name": self.label_name,
                "kinds": list(self.kinds)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(tuple(d["names"]), d.get("label_name", DEFAULT_LABEL),
                   tuple(d["kinds"]) if d.get("kinds") else None)


@dataclass(frozen=True, eq=False)
class DataTable:
    """Feature matrix ``X`` (n x M) and binary labels ``y``; read-only arrays."""

    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        y = np.array(self.y, copy=True)
        if X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        if X.shape[1] != len(self.schema):
            raise SchemaMismatch(
                f"X has {X.shape[1]} columns, schema lists {len(self.schema)}")
        if y.shape != (X.shape[0],):
            raise ValueError("y must have one label per row")
        if np.isnan(X).any():
            r, c = np.argwhere(np.isnan(X))[0]
            raise MissingValue(f"row {r}, column {self.schema.names[c]!r} is missing")
        if y.size and not np.isin(y, (0, 1)).all():
            raise InvalidLabel("labels must be 0 or 1")
        y = y.astype(np.int64)
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    @property
    def feature_names(self) -> tuple:
        return self.schema.names

    def class_counts(self) -> tuple:
        ones = int(self.y.sum())
        return self.n - ones, ones

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.schema.index(name)]

    def take(self, indices) -> "DataTable":
        idx = np.asarray(indices, dtype=np.int64)
        return DataTable(self.schema, self.X[idx], self.y[idx])

    def select(self, names) -> "DataTable":
        cols = [self.schema.index(n) for n in names]
        return DataTable(self.schema.subset(names), self.X[:, cols], self.y)


def _parse_cell(text, row, column):
    text = text.strip()
    if text == "" or text.lower() in ("na", "nan", "null"):
        raise MissingValue(f"row {row}, column {column!r}: missing value")
    try:
        value = float(text)
    except ValueError:
        raise NonNumericCell(f"row {row}, column {column!r}: {text!r} is not numeric") from None
    if math.isnan(value):
        raise MissingValue(f"row {row}, column {column!r}: missing value")
    return value


def load_csv(path, schema: FeatureSchema | None = None) -> DataTable:
    """Read a comma-delimited UTF-8 file with a header row.

    Columns are matched by name, so their order in the file does not matter
    and extra columns (ids, coordinates) are ignored. Row numbers in error
    messages are 1-based data rows, excluding the header.
    """
    schema = schema or FeatureSchema.default()
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not any(h.strip() for h in header):
            raise EmptyFile(f"{path}: no header row")
        header = [h.strip() for h in header]
        wanted = list(schema.names) + [schema.label_name]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {missing}")
        positions = [header.index(c) for c in wanted]

        rows = []
        for lineno, record in enumerate(reader, start=1):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) < len(header):
                record = record + [""] * (len(header) - len(record))
            rows.append([_parse_cell(record[p], lineno, c)
                         for p, c in zip(positions, wanted)])
    if not rows:
        raise EmptyFile(f"{path}: no data rows")

    data = np.asarray(rows, dtype=np.float64)
    labels = data[:, -1]
    bad = np.flatnonzero(~np.isin(labels, (0.0, 1.0)))
    if bad.size:
        raise InvalidLabel(
            f"row {bad[0] + 1}, column {schema.label_name!r}: label {labels[bad[0]]!r} not in {{0, 1}}")
    return DataTable(schema, data[:, :-1], labels.astype(np.int64))


def infer_schema(path, label_name: str = DEFAULT_LABEL) -> FeatureSchema:
    """Schema made of every header column except the label; CHANGE, LANDUSE and
    GEOLOGY are categorical, the rest continuous."""
    with Path(path).open(newline="", encoding="utf-8-sig") as fh:
        header = next(csv.reader(fh), None)
    if not header:
        raise EmptyFile(f"{path}: no header row")
    header = [h.strip() for h in header]
    if label_name not in header:
        raise MissingColumn(f"{path}: missing label column {label_name!r}")
    names = tuple(h for h in header if h != label_name)
    kinds = tuple(CATEGORICAL if n in CATEGORICAL_FACTORS else CONTINUOUS for n in names)
    return FeatureSchema(names, label_name, kinds)


def write_csv(table: DataTable, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(table.feature_names) + [table.schema.label_name])
        for xs, label in zip(table.X, table.y):
            writer.writerow([repr(float(v)) for v in xs] + [int(label)])


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.33
    seed: int = 15
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")


@dataclass(frozen=True)
class TrainTestSplit:
    train: DataTable
    test: DataTable
    train_indices: np.ndarray
    test_indices: np.ndarray
    spec: SplitSpec = field(default_factory=SplitSpec)

    def to_dict(self) -> dict:
        return {
            "test_fraction": self.spec.test_fraction,
            "seed": self.spec.seed,
            "stratified": self.spec.stratified,
            "train_indices": [int(i) for i in self.train_indices],
            "test_indices": [int(i) for i in self.test_indices],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, table: DataTable, d: dict) -> "TrainTestSplit":
        spec = SplitSpec(d["test_fraction"], d["seed"], d["stratified"])
        tr = np.asarray(d["train_indices"], dtype=np.int64)
        te = np.asarray(d["test_indices"], dtype=np.int64)
        return cls(table.take(tr), table.take(te), tr, te, spec)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(table: DataTable, spec: SplitSpec | None = None) -> TrainTestSplit:
    """Hold out ``round(count * test_fraction)`` rows of each class.

    One generator seeded with ``spec.seed`` permutes each class in turn
    (class 0 first); the leading slice of each permutation is the test part.
    Index lists come back sorted so both parts keep the file's row order.
    """
    spec = spec or SplitSpec()
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        groups = [np.flatnonzero(table.y == c) for c in (0, 1)]
        for c, g in enumerate(groups):
            if g.size == 0:
                raise DegenerateClass(f"class {c} has no rows")
    else:
        groups = [np.arange(table.n)]

    test_parts, train_parts = [], []
    for g in groups:
        n_test = _round_half_up(g.size * spec.test_fraction)
        if n_test == 0 or n_test == g.size:
            raise DegenerateClass(
                f"{g.size} rows at test_fraction {spec.test_fraction} leave an empty side")
        perm = rng.permutation(g)
        test_parts.append(perm[:n_test])
        train_parts.append(perm[n_test:])
    test_idx = np.sort(np.concatenate(test_parts))
    train_idx = np.sort(np.concatenate(train_parts))
    return TrainTestSplit(table.take(train_idx), table.take(test_idx),
                          train_idx, test_idx, spec)


def stratified_subsample(table: DataTable, fraction: float, seed: int) -> np.ndarray:
    """Sorted row indices keeping ``round(fraction * count)`` rows per class."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    if fraction == 1.0:
        return np.arange(table.n)
    rng = np.random.default_rng(seed)
    keep = []
    for c in (0, 1):
        g = np.flatnonzero(table.y == c)
        keep.append(rng.permutation(g)[:_round_half_up(g.size * fraction)])
    return np.sort(np.concatenate(keep))


def quantile_bin(column, k: int = 10) -> np.ndarray:
    """Map values to ``k`` empirical-quantile bins, numbered ``0..k-1``.

    Values equal to a cut point fall in the lower bin, so equal values always
    share a bin and the mapping is monotone. Heavily tied columns can leave
    some bins empty.
    """
    x = np.asarray(column, dtype=np.float64)
    if k < 2:
        raise ValueError("k must be at least 2")
    if x.size < k:
        raise ValueError(f"need at least k={k} values, got {x.size}")
    if np.unique(x).size < 2:
        raise TooFewDistinctValues("column has fewer than 2 distinct values")
    edges = np.quantile(x, np.arange(1, k) / k)
    return np.searchsorted(edges, x, side="left").astype(np.int64)


# name -> (informative?, generator(rng, y))
def _surrogate_columns():
    def gamma(shape0, scale0, shape1, scale1, shift=0.0):
        def draw(rng, y):
            a = np.where(y == 1, shape1, shape0)
            s = np.where(y == 1, scale1, scale0)
            return rng.gamma(a, s) + shift
        return draw

    def categorical(p0, p1, offset=1):
        def draw(rng, y):
            u = rng.random(y.size)
            c0, c1 = np.cumsum(p0), np.cumsum(p1)
            return np.where(y == 1, np.searchsorted(c1, u), np.searchsorted(c0, u)) + offset
        return draw

    def noise_gamma(shape, scale, shift=0.0):
        return lambda rng, y: rng.gamma(shape, scale, y.size) + shift

    return {
        "PROFILE": (True, lambda rng, y: rng.laplace(np.where(y == 1, -0.25, 0.25), 0.5)),
        "PLAN": (False, lambda rng, y: rng.laplace(0.0, 0.4, y.size)),
        "CHANGE": (True, categorical([0.55, 0.25, 0.15, 0.05], [0.2, 0.25, 0.3, 0.25], 0)),
        "LANDUSE": (False, categorical([0.3, 0.25, 0.2, 0.15, 0.1], [0.3, 0.25, 0.2, 0.15, 0.1])),
        "ELEVATION": (True, gamma(2.0, 30.0, 5.0, 25.0, 10.0)),
        "SLOPE": (True, gamma(2.0, 5.0, 6.0, 5.0)),
        "ASPECT": (False, lambda rng, y: rng.uniform(0.0, 360.0, y.size)),
        "TWI": (True, gamma(6.0, 1.5, 3.0, 1.2, 2.0)),
        "SPI": (False, noise_gamma(0.8, 40.0)),
        "DRAINAGE": (True, gamma(1.5, 220.0, 1.5, 120.0)),
        "NDVI": (False, lambda rng, y: rng.beta(5.0, 2.0, y.size) * 0.8 - 0.1),
        "RAINFALL": (True, gamma(40.0, 60.0, 55.0, 50.0)),
        "FAULTLINES": (False, noise_gamma(1.2, 900.0)),
        "ROAD": (True, gamma(1.0, 700.0, 1.0, 150.0)),
        "GEOLOGY": (True, categorical([0.35, 0.3, 0.2, 0.1, 0.05], [0.1, 0.15, 0.2, 0.25, 0.3])),
    }


SURROGATE_INFORMATIVE = tuple(n for n, (info, _) in _surrogate_columns().items() if info)
SURROGATE_NOISE = tuple(n for n, (info, _) in _surrogate_columns().items() if not info)


def make_surrogate(seed: int = 15, n_per_class: int = 196) -> DataTable:
    """Synthetic stand-in for the 392-row landslide benchmark.

    Same 15 factor names and class balance. Nine factors (SLOPE, ELEVATION,
    ROAD, TWI, PROFILE, CHANGE, DRAINAGE, RAINFALL, GEOLOGY) have
    class-dependent, mostly skewed distributions; ASPECT, FAULTLINES, SPI,
    PLAN, NDVI and LANDUSE are drawn independently of the label.
    Categorical factors take small integer codes.
    """
    rng = np.random.default_rng(seed)
    y = np.repeat(np.array([0, 1]), n_per_class)
    y = y[rng.permutation(y.size)]
    columns = _surrogate_columns()
    X = np.column_stack([columns[name][1](rng, y) for name in LANDSLIDE_FACTORS])
    return DataTable(FeatureSchema.default(), X, y)
