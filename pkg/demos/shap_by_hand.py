"""TreeSHAP against direct Shapley summation on a two-feature tree.

The tree predicts 4 only when both features are high. With equal covers the
empty coalition is worth 1, either single feature 2, and both together 4, so
each feature's Shapley value is 1.5.
"""

import numpy as np

from landslide_xai.explain import brute_force_shap, coalition_values, tree_shap
from landslide_xai.gbt import GbtModel, GbtParams, Tree

i64 = np.int64
tree = Tree(feature=np.array([0, -1, 1, -1, -1], dtype=i64),
            threshold=np.array([0.5, 0, 0.5, 0, 0]),
            left=np.array([1, -1, 3, -1, -1], dtype=i64),
            right=np.array([2, -1, 4, -1, -1], dtype=i64),
            value=np.array([0.0, 0.0, 0.0, 0.0, 4.0]),
            cover=np.array([100.0, 50.0, 50.0, 25.0, 25.0]))
model = GbtModel((tree,), 0.0, GbtParams(learning_rate=1.0), ("f0", "f1"))

x = np.array([[1.0, 1.0]])
print("coalition values {}, {f0}, {f1}, {f0,f1}:", coalition_values(model, x))
print("TreeSHAP:   ", tree_shap(model, x).values[0])
print("brute force:", brute_force_shap(model, x))
print("expected value:", tree_shap(model, x).expected_value)
