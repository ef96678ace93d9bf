"""Gradient-boosted regression trees for binary classification.

Second-order boosting on the logistic loss: each round fits one tree to the
residuals ``y - p`` with per-row cover ``p (1 - p)``, scoring splits by the
gain of similarity scores and pruning splits whose gain falls below
``gamma``. Exact greedy split search over midpoints of sorted unique values.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numba
import numpy as np

from .dataset import DataTable
from .errors import SchemaMismatch, SingleClassTrain


@dataclass(frozen=True)
class GbtParams:
    max_depth: int = 3
    n_estimators: int = 1500
    learning_rate: float = 0.1
    gamma: float = 0.0
    subsample: float = 1.0
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0
    seed: int = 15

    kind = "gbt"

    def __post_init__(self):
        if self.max_depth < 1 or self.n_estimators < 1:
            raise ValueError("max_depth and n_estimators must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.gamma < 0 or self.reg_lambda < 0 or self.min_child_weight < 0:
            raise ValueError("gamma, reg_lambda and min_child_weight must be >= 0")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must lie in (0, 1]")


def similarity_score(residuals, covers, reg_lambda: float = 1.0) -> float:
    r = np.asarray(residuals, dtype=np.float64)
    c = np.asarray(covers, dtype=np.float64)
    return float(r.sum() ** 2 / (c.sum() + reg_lambda))


def gain(left: float, right: float, root: float) -> float:
    return left + right - root


def leaf_output(residuals, covers, reg_lambda: float = 1.0) -> float:
    return float(np.sum(residuals) / (np.sum(covers) + reg_lambda))


def cover(probabilities) -> np.ndarray:
    p = np.asarray(probabilities, dtype=np.float64)
    return p * (1.0 - p)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat node arrays; node 0 is the root, leaves have ``feature == -1``.

    Rows with ``x[feature] < threshold`` go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def depth(self) -> int:
        def walk(node):
            if self.is_leaf(node):
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))
        return walk(0)

    @classmethod
    def leaf(cls, value: float, cover: float = 1.0) -> "Tree":
        return cls(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]),
                   np.array([float(value)]), np.array([float(cover)]))

    def to_dict(self, node: int = 0) -> dict:
        if self.is_leaf(node):
            return {"output": float(self.value[node]), "cover": float(self.cover[node])}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "cover": float(self.cover[node]),
            "left": self.to_dict(int(self.left[node])),
            "right": self.to_dict(int(self.right[node])),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        # breadth-first numbering, matching the order fit() allocates nodes
        nodes = [d]
        feature, threshold, left, right, value, cov = [], [], [], [], [], []
        i = 0
        while i < len(nodes):
            nd = nodes[i]
            cov.append(float(nd["cover"]))
            if "output" in nd:
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(float(nd["output"]))
            else:
                feature.append(int(nd["feature"]))
                threshold.append(float(nd["threshold"]))
                left.append(len(nodes))
                right.append(len(nodes) + 1)
                value.append(0.0)
                nodes.extend([nd["left"], nd["right"]])
            i += 1
        return cls(np.array(feature, dtype=np.int64), np.array(threshold),
                   np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                   np.array(value), np.array(cov))


@numba.njit(cache=True)
def _grow_tree(X, order, grad, hess, in_sample, max_depth, reg_lambda, gamma,
               min_child_weight, feature, threshold, left, right, value, cover):
    n, m = X.shape
    max_nodes = feature.size
    node_of = np.full(n, -1, dtype=np.int64)
    G = np.zeros(max_nodes)
    H = np.zeros(max_nodes)
    for i in range(n):
        if in_sample[i]:
            node_of[i] = 0
            G[0] += grad[i]
            H[0] += hess[i]

    best_gain = np.empty(max_nodes)
    best_feat = np.empty(max_nodes, dtype=np.int64)
    best_thr = np.empty(max_nodes)
    GL = np.empty(max_nodes)
    HL = np.empty(max_nodes)
    prev = np.empty(max_nodes)
    count = np.empty(max_nodes, dtype=np.int64)

    n_nodes = 1
    lo, hi = 0, 1
    for depth in range(max_depth + 1):
        if lo == hi:
            break
        for nd in range(lo, hi):
            best_gain[nd] = -np.inf
            best_feat[nd] = -1
            best_thr[nd] = 0.0
        if depth < max_depth:
            for f in range(m):
                for nd in range(lo, hi):
                    GL[nd] = 0.0
                    HL[nd] = 0.0
                    count[nd] = 0
                for t in range(n):
                    i = order[t, f]
                    nd = node_of[i]
                    if nd < lo or nd >= hi:
                        continue
                    x = X[i, f]
                    if count[nd] > 0 and x > prev[nd]:
                        hl = HL[nd]
                        hr = H[nd] - hl
                        if hl >= min_child_weight and hr >= min_child_weight:
                            gl = GL[nd]
                            gr = G[nd] - gl
                            g = (gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda)
                                 - G[nd] * G[nd] / (H[nd] + reg_lambda))
                            if g > best_gain[nd]:
                                best_gain[nd] = g
                                best_feat[nd] = f
                                best_thr[nd] = 0.5 * (prev[nd] + x)
                    GL[nd] += grad[i]
                    HL[nd] += hess[i]
                    count[nd] += 1
                    prev[nd] = x
        for nd in range(lo, hi):
            if best_feat[nd] >= 0 and best_gain[nd] > 0.0 and best_gain[nd] >= gamma:
                feature[nd] = best_feat[nd]
                threshold[nd] = best_thr[nd]
                left[nd] = n_nodes
                right[nd] = n_nodes + 1
                G[n_nodes] = 0.0
                H[n_nodes] = 0.0
                G[n_nodes + 1] = 0.0
                H[n_nodes + 1] = 0.0
                n_nodes += 2
            else:
                feature[nd] = -1
                threshold[nd] = 0.0
                left[nd] = -1
                right[nd] = -1
                value[nd] = G[nd] / (H[nd] + reg_lambda)
                cover[nd] = H[nd]
        for i in range(n):
            nd = node_of[i]
            if nd >= lo and nd < hi and feature[nd] >= 0:
                if X[i, feature[nd]] < threshold[nd]:
                    child = left[nd]
                else:
                    child = right[nd]
                node_of[i] = child
                G[child] += grad[i]
                H[child] += hess[i]
        lo, hi = hi, n_nodes

    # bottom-up so every split's cover is exactly the sum of its children's
    for nd in range(n_nodes - 1, -1, -1):
        if feature[nd] >= 0:
            cover[nd] = cover[left[nd]] + cover[right[nd]]
            value[nd] = 0.0
    return n_nodes


@numba.njit(cache=True)
def _predict_tree(X, feature, threshold, left, right, value, out, scale):
    for i in range(X.shape[0]):
        nd = 0
        while feature[nd] >= 0:
            if X[i, feature[nd]] < threshold[nd]:
                nd = left[nd]
            else:
                nd = right[nd]
        out[i] += scale * value[nd]


@numba.njit(cache=True)
def _predict_ensemble(X, feature, threshold, left, right, value, out, scale):
    for t in range(feature.shape[0]):
        _predict_tree(X, feature[t], threshold[t], left[t], right[t], value[t], out, scale)


def _stack(trees, dtype, attr, fill):
    width = max(t.n_nodes for t in trees)
    out = np.full((len(trees), width), fill, dtype=dtype)
    for k, t in enumerate(trees):
        out[k, :t.n_nodes] = getattr(t, attr)
    return out


@dataclass(frozen=True, eq=False)
class GbtModel:
    trees: tuple
    base_margin: float
    params: GbtParams = field(default_factory=GbtParams)
    feature_names: tuple = ()

    kind = "gbt"

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @cached_property
    def _arrays(self):
        if not self.trees:
            return None
        return (_stack(self.trees, np.int64, "feature", -1),
                _stack(self.trees, np.float64, "threshold", 0.0),
                _stack(self.trees, np.int64, "left", -1),
                _stack(self.trees, np.int64, "right", -1),
                _stack(self.trees, np.float64, "value", 0.0),
                _stack(self.trees, np.float64, "cover", 0.0))

    def predict_margin(self, rows) -> np.ndarray:
        X = as_matrix(rows, self.feature_names)
        out = np.full(X.shape[0], float(self.base_margin))
        if self.trees:
            f, thr, lft, rgt, val, _ = self._arrays
            _predict_ensemble(X, f, thr, lft, rgt, val, out, float(self.params.learning_rate))
        return out

    def staged_margin(self, rows):
        """Yield the margin after each boosting round (round 0 = base)."""
        X = as_matrix(rows, self.feature_names)
        out = np.full(X.shape[0], float(self.base_margin))
        yield out.copy()
        lr = float(self.params.learning_rate)
        for t in self.trees:
            _predict_tree(X, t.feature, t.threshold, t.left, t.right, t.value, out, lr)
            yield out.copy()

    def predict_proba(self, rows) -> np.ndarray:
        return sigmoid(self.predict_margin(rows))

    def predict_score(self, rows) -> np.ndarray:
        return self.predict_proba(rows)

    def predict_label(self, rows) -> np.ndarray:
        return (self.predict_margin(rows) >= 0.0).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "kind": "gbt",
            "params": asdict(self.params),
            "base_margin": float(self.base_margin),
            "feature_names": list(self.feature_names),
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "GbtModel":
        return cls(tuple(Tree.from_dict(t) for t in d["trees"]), float(d["base_margin"]),
                   GbtParams(**d["params"]), tuple(d["feature_names"]))


def as_matrix(rows, feature_names=()) -> np.ndarray:
    """Feature matrix of ``rows`` after checking it matches the model schema."""
    if isinstance(rows, DataTable):
        if feature_names and tuple(rows.feature_names) != tuple(feature_names):
            raise SchemaMismatch(
                f"model expects features {list(feature_names)}, got {list(rows.feature_names)}")
        X = rows.X
    else:
        X = np.asarray(rows, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
    if feature_names and X.shape[1] != len(feature_names):
        raise SchemaMismatch(f"model expects {len(feature_names)} features, got {X.shape[1]}")
    return np.ascontiguousarray(X, dtype=np.float64)


def fit(train: DataTable, params: GbtParams | None = None) -> GbtModel:
    params = params or GbtParams()
    X = np.ascontiguousarray(train.X, dtype=np.float64)
    y = train.y.astype(np.float64)
    n = y.size
    pos = y.sum()
    if pos == 0 or pos == n:
        raise SingleClassTrain("training data contains a single class")
    prevalence = pos / n
    base = float(np.log(prevalence / (1.0 - prevalence)))

    order = np.argsort(X, axis=0, kind="stable").astype(np.int64)
    max_nodes = 2 ** (params.max_depth + 1) - 1
    rng = np.random.default_rng(params.seed)
    n_sub = max(1, int(round(params.subsample * n)))
    in_sample = np.ones(n, dtype=np.bool_)
    margin = np.full(n, base)
    lr = float(params.learning_rate)

    trees = []
    for _ in range(params.n_estimators):
        p = sigmoid(margin)
        grad = y - p
        hess = p * (1.0 - p)
        if n_sub < n:
            in_sample[:] = False
            in_sample[rng.choice(n, size=n_sub, replace=False)] = True
        feature = np.full(max_nodes, -1, dtype=np.int64)
        threshold = np.zeros(max_nodes)
        left = np.full(max_nodes, -1, dtype=np.int64)
        right = np.full(max_nodes, -1, dtype=np.int64)
        value = np.zeros(max_nodes)
        cov = np.zeros(max_nodes)
        k = _grow_tree(X, order, grad, hess, in_sample, params.max_depth,
                       float(params.reg_lambda), float(params.gamma),
                       float(params.min_child_weight), feature, threshold, left, right, value, cov)
        tree = Tree(feature[:k].copy(), threshold[:k].copy(), left[:k].copy(),
                    right[:k].copy(), value[:k].copy(), cov[:k].copy())
        _predict_tree(X, tree.feature, tree.threshold, tree.left, tree.right, tree.value, margin, lr)
        trees.append(tree)
    return GbtModel(tuple(trees), base, params, tuple(train.feature_names))


def predict_margin(model: GbtModel, rows) -> np.ndarray:
    return model.predict_margin(rows)


def predict_proba(model: GbtModel, rows) -> np.ndarray:
    return model.predict_proba(rows)


def predict_label(model: GbtModel, rows) -> np.ndarray:
    return model.predict_label(rows)


def logloss(labels, margins) -> float:
    y = np.asarray(labels, dtype=np.float64)
    z = np.asarray(margins, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))
