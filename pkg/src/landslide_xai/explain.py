"""Shapley-value explanations for boosted tree ensembles.

``tree_shap`` is the polynomial-time path recursion over the tree structure;
``brute_force_shap`` evaluates the Shapley sum over all feature subsets
directly. Both explain the same set function: the cover-weighted conditional
expectation of the margin, where features outside the coalition are
integrated out by following both children weighted by their cover.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .errors import DropCountOutOfRange, NonPositiveCover, TooManyFeatures
from .gbt import GbtModel, as_matrix


@dataclass(frozen=True, eq=False)
class ShapMatrix:
    values: np.ndarray
    expected_value: float
    feature_names: tuple

    @property
    def shape(self):
        return self.values.shape


@numba.njit(cache=True)
def _extend(pf, pz, po, pw, depth, zero_frac, one_frac, feat):
    pf[depth] = feat
    pz[depth] = zero_frac
    po[depth] = one_frac
    pw[depth] = 1.0 if depth == 0 else 0.0
    for i in range(depth - 1, -1, -1):
        pw[i + 1] += one_frac * pw[i] * (i + 1) / (depth + 1)
        pw[i] = zero_frac * pw[i] * (depth - i) / (depth + 1)


@numba.njit(cache=True)
def _unwind(pf, pz, po, pw, depth, idx):
    one_frac = po[idx]
    zero_frac = pz[idx]
    nxt = pw[depth]
    for i in range(depth - 1, -1, -1):
        if one_frac != 0.0:
            tmp = pw[i]
            pw[i] = nxt * (depth + 1) / ((i + 1) * one_frac)
            nxt = tmp - pw[i] * zero_frac * (depth - i) / (depth + 1)
        else:
            pw[i] = pw[i] * (depth + 1) / (zero_frac * (depth - i))
    for i in range(idx, depth):
        pf[i] = pf[i + 1]
        pz[i] = pz[i + 1]
        po[i] = po[i + 1]


@numba.njit(cache=True)
def _unwound_sum(pz, po, pw, depth, idx):
    one_frac = po[idx]
    zero_frac = pz[idx]
    nxt = pw[depth]
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if one_frac != 0.0:
            tmp = nxt * (depth + 1) / ((i + 1) * one_frac)
            total += tmp
            nxt = pw[i] - tmp * zero_frac * (depth - i) / (depth + 1)
        elif zero_frac != 0.0:
            total += (pw[i] / zero_frac) / ((depth - i) / (depth + 1))
    return total


# numba cannot reload a cached self-recursive function safely, so these two
# compile once per process
@numba.njit
def _recurse(x, feature, threshold, left, right, value, cover, phi, scale,
             node, pf, pz, po, pw, offset, depth, zero_frac, one_frac, feat):
    # each level works on its own copy of the parent's path
    width = depth + 1
    base = offset + depth  # start of this level's path segment
    if depth > 0:
        for k in range(depth):
            pf[base + k] = pf[offset + k]
            pz[base + k] = pz[offset + k]
            po[base + k] = po[offset + k]
            pw[base + k] = pw[offset + k]
    else:
        base = offset
    qf = pf[base:base + width + 1]
    qz = pz[base:base + width + 1]
    qo = po[base:base + width + 1]
    qw = pw[base:base + width + 1]
    _extend(qf, qz, qo, qw, depth, zero_frac, one_frac, feat)

    f = feature[node]
    if f < 0:
        for i in range(1, depth + 1):
            w = _unwound_sum(qz, qo, qw, depth, i)
            phi[qf[i]] += w * (qo[i] - qz[i]) * value[node] * scale
        return

    if x[f] < threshold[node]:
        hot, cold = left[node], right[node]
    else:
        hot, cold = right[node], left[node]
    inc_zero = 1.0
    inc_one = 1.0
    k = 0
    while k <= depth:
        if qf[k] == f:
            break
        k += 1
    if k != depth + 1:
        inc_zero = qz[k]
        inc_one = qo[k]
        _unwind(qf, qz, qo, qw, depth, k)
        depth -= 1
    _recurse(x, feature, threshold, left, right, value, cover, phi, scale,
             hot, pf, pz, po, pw, base, depth + 1,
             cover[hot] / cover[node] * inc_zero, inc_one, f)
    _recurse(x, feature, threshold, left, right, value, cover, phi, scale,
             cold, pf, pz, po, pw, base, depth + 1,
             cover[cold] / cover[node] * inc_zero, 0.0, f)


@numba.njit
def _tree_shap_ensemble(X, feature, threshold, left, right, value, cover, scale, max_depth, out):
    size = (max_depth + 2) * (max_depth + 3) + 8
    pf = np.zeros(size, dtype=np.int64)
    pz = np.zeros(size)
    po = np.zeros(size)
    pw = np.zeros(size)
    for t in range(feature.shape[0]):
        if feature[t, 0] < 0:
            continue
        for r in range(X.shape[0]):
            _recurse(X[r], feature[t], threshold[t], left[t], right[t], value[t], cover[t],
                     out[r], scale, 0, pf, pz, po, pw, 0, 0, 1.0, 1.0, -1)


def _expected_leaf_value(tree) -> float:
    def walk(node):
        if tree.feature[node] < 0:
            return tree.value[node]
        c = tree.cover[node]
        l, r = tree.left[node], tree.right[node]
        return (tree.cover[l] * walk(l) + tree.cover[r] * walk(r)) / c
    return float(walk(0))


def _check_covers(model: GbtModel):
    for k, t in enumerate(model.trees):
        if t.n_nodes > 1 and not (t.cover > 0).all():
            raise NonPositiveCover(f"tree {k} has a node with nonpositive cover")


def expected_value(model: GbtModel) -> float:
    lr = model.params.learning_rate
    return float(model.base_margin + lr * sum(_expected_leaf_value(t) for t in model.trees))


def tree_shap(model: GbtModel, rows) -> ShapMatrix:
    """Exact path-dependent Shapley values in margin space, one row per instance."""
    X = as_matrix(rows, model.feature_names)
    _check_covers(model)
    out = np.zeros(X.shape, dtype=np.float64)
    if model.trees:
        f, thr, lft, rgt, val, cov = model._arrays
        max_depth = max(t.depth() for t in model.trees)
        _tree_shap_ensemble(X, f, thr, lft, rgt, val, cov, float(model.params.learning_rate),
                            max_depth, out)
    return ShapMatrix(out, expected_value(model), tuple(model.feature_names))


def _subset_values(tree, x, masks) -> np.ndarray:
    """Conditional expectation of one tree for every coalition in ``masks``."""
    total = np.zeros(masks.shape[0])

    def walk(node, weight):
        if tree.feature[node] < 0:
            total[:] += weight * tree.value[node]
            return
        f = tree.feature[node]
        l, r = tree.left[node], tree.right[node]
        goes_left = x[f] < tree.threshold[node]
        c = tree.cover[node]
        in_s = masks[:, f]
        wl = np.where(in_s, 1.0 if goes_left else 0.0, tree.cover[l] / c)
        wr = np.where(in_s, 0.0 if goes_left else 1.0, tree.cover[r] / c)
        walk(l, weight * wl)
        walk(r, weight * wr)

    walk(0, np.ones(masks.shape[0]))
    return total


def coalition_values(model: GbtModel, row) -> np.ndarray:
    """f_x(S) for all 2^M coalitions, indexed by bitmask (bit j = feature j)."""
    x = as_matrix(row, model.feature_names)[0]
    m = x.size
    codes = np.arange(2 ** m)
    masks = ((codes[:, None] >> np.arange(m)) & 1).astype(bool)
    values = np.full(codes.size, float(model.base_margin))
    lr = model.params.learning_rate
    for t in model.trees:
        values += lr * _subset_values(t, x, masks)
    return values


def brute_force_shap(model: GbtModel, row) -> np.ndarray:
    """Shapley values by direct summation over every subset of the other features."""
    m = len(model.feature_names) if model.feature_names else as_matrix(row).shape[1]
    if m > 20:
        raise TooManyFeatures(f"{m} features means 2^{m} coalitions; limit is 20")
    _check_covers(model)
    fx = coalition_values(model, row)
    codes = np.arange(2 ** m)
    sizes = np.array([bin(c).count("1") for c in codes])
    weights = np.array([math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m)
                        if s < m else 0.0 for s in sizes])
    phi = np.zeros(m)
    for j in range(m):
        bit = 1 << j
        without = codes[(codes & bit) == 0]
        phi[j] = np.sum(weights[without] * (fx[without | bit] - fx[without]))
    return phi


@dataclass(frozen=True)
class FeatureImportance:
    feature_names: tuple
    mean_abs: tuple
    order: tuple  # feature indices, most important first

    @property
    def ranking(self) -> list:
        return [self.feature_names[i] for i in self.order]

    def rank_of(self, name: str) -> int:
        """1-based rank of a feature."""
        return self.ranking.index(name) + 1

    def to_dict(self) -> dict:
        return {
            "ranking": [{"rank": r + 1, "feature": self.feature_names[i],
                         "mean_abs_shap": self.mean_abs[i]}
                        for r, i in enumerate(self.order)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureImportance":
        entries = d["ranking"]
        names = tuple(e["feature"] for e in entries)
        return cls(names, tuple(float(e["mean_abs_shap"]) for e in entries),
                   tuple(range(len(names))))


def rank_features(shap: ShapMatrix) -> FeatureImportance:
    vals = np.asarray(shap.values)
    if vals.size == 0:
        raise ValueError("empty SHAP matrix")
    mean_abs = np.abs(vals).mean(axis=0)
    # stable sort on the negated score keeps declaration order among ties
    order = np.argsort(-mean_abs, kind="stable")
    return FeatureImportance(tuple(shap.feature_names),
                             tuple(float(v) for v in mean_abs),
                             tuple(int(i) for i in order))


@dataclass(frozen=True)
class SummaryPoint:
    row: int
    feature: str
    rank: int
    shap: float
    value: float  # min-max normalized feature value


def summary_points(shap: ShapMatrix, rows, importance: FeatureImportance | None = None) -> list:
    """Points for a beeswarm-style summary plot, ordered by feature rank then row.

    Feature values are min-max normalized per column; a constant column maps
    to 0.5.
    """
    X = as_matrix(rows)
    if X.shape != shap.values.shape:
        raise ValueError(f"SHAP matrix {shap.values.shape} vs rows {X.shape}")
    importance = importance or rank_features(shap)
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = hi - lo
    points = []
    for rank, j in enumerate(importance.order, start=1):
        if span[j] > 0:
            norm = (X[:, j] - lo[j]) / span[j]
        else:
            norm = np.full(X.shape[0], 0.5)
        for r in range(X.shape[0]):
            points.append(SummaryPoint(r, shap.feature_names[j], rank,
                                       float(shap.values[r, j]), float(norm[r])))
    return points


@dataclass(frozen=True)
class ReductionPlan:
    drop_count: int
    dropped: tuple
    retained: tuple

    def to_dict(self) -> dict:
        return {"drop_count": self.drop_count, "dropped": list(self.dropped),
                "retained": list(self.retained)}


def select_features(importance: FeatureImportance, drop_count: int,
                    schema_order=None) -> ReductionPlan:
    """Drop the ``drop_count`` lowest-ranked features.

    ``retained`` follows ``schema_order`` when given (so a reduced table keeps
    the original column order), otherwise the importance ranking.
    """
    m = len(importance.feature_names)
    if not 0 <= drop_count < m:
        raise DropCountOutOfRange(f"drop_count must be in [0, {m}), got {drop_count}")
    ranking = importance.ranking
    dropped = tuple(ranking[m - drop_count:]) if drop_count else ()
    keep = set(ranking[:m - drop_count])
    order = schema_order if schema_order is not None else ranking
    return ReductionPlan(drop_count, dropped, tuple(n for n in order if n in keep))


def write_shap_csv(path, points) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "feature", "rank", "shap", "normalized_value"])
        for p in points:
            w.writerow([p.row, p.feature, p.rank, repr(p.shap), repr(p.value)])


def write_importance_json(path, importance: FeatureImportance, shap: ShapMatrix) -> None:
    payload = importance.to_dict()
    payload["expected_value"] = shap.expected_value
    Path(path).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
