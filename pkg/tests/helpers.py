"""Shared builders for small synthetic tables and random tree ensembles."""

import numpy as np

from landslide_xai.dataset import DataTable, FeatureSchema
from landslide_xai.gbt import GbtModel, GbtParams, Tree


def make_table(X, y, names=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    names = names or tuple(f"x{j}" for j in range(X.shape[1]))
    return DataTable(FeatureSchema(tuple(names)), X, np.asarray(y))


def xor_table(per_quadrant=50, jitter=0.4, seed=1):
    """Four noisy clusters around the unit-square corners; label = x0 xor x1."""
    rng = np.random.default_rng(seed)
    corners = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    X = np.repeat(corners, per_quadrant, axis=0)
    y = (X[:, 0] != X[:, 1]).astype(int)
    X = X + rng.uniform(-jitter, jitter, X.shape)
    return make_table(X, y)


def exact_xor_table(copies=1):
    X = np.tile(np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float), (copies, 1))
    return make_table(X, (X[:, 0] != X[:, 1]).astype(int))


def separable_table(n=200, m=2, margin=0.5, seed=0):
    """Two Gaussian blobs pushed apart along a random direction, with a clear gap."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=m)
    w /= np.linalg.norm(w)
    X = rng.normal(size=(n, m))
    s = X @ w
    y = (s > 0).astype(int)
    X = X + np.outer(np.where(y == 1, margin, -margin), w)
    return make_table(X, y)


def random_tree(rng, m, max_depth):
    """Random full binary tree in breadth-first layout with consistent covers."""
    feature, threshold, left, right, value, cover = [], [], [], [], [], []
    queue = [(0, rng.uniform(5, 50))]  # (depth, cover)
    i = 0
    while i < len(queue):
        depth, c = queue[i]
        cover.append(c)
        split = depth < max_depth and (depth == 0 or rng.random() < 0.7)
        if split:
            feature.append(int(rng.integers(m)))
            threshold.append(float(rng.normal()))
            frac = rng.uniform(0.05, 0.95)
            left.append(len(queue))
            right.append(len(queue) + 1)
            value.append(0.0)
            queue.extend([(depth + 1, c * frac), (depth + 1, c * (1 - frac))])
        else:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(rng.normal()))
        i += 1
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.array(value), np.array(cover))


def random_ensemble(rng, m=None, max_depth=None, n_trees=None):
    m = m or int(rng.integers(1, 11))
    max_depth = max_depth or int(rng.integers(1, 5))
    n_trees = n_trees or int(rng.integers(1, 21))
    trees = tuple(random_tree(rng, m, max_depth) for _ in range(n_trees))
    params = GbtParams(max_depth=max_depth, n_estimators=n_trees,
                       learning_rate=float(rng.uniform(0.05, 1.0)))
    names = tuple(f"f{j}" for j in range(m))
    return GbtModel(trees, float(rng.normal()), params, names)
