"""Walk through screening, boosting, SHAP and feature reduction on the surrogate.

Run with ``python demos/surrogate_walkthrough.py``. Takes a few seconds.
"""

import numpy as np

from landslide_xai import explain, gbt, modelsel, stats
from landslide_xai.dataset import SplitSpec, make_surrogate, stratified_split
from landslide_xai.metrics import evaluate

table = make_surrogate(seed=15)
print(f"{table.n} rows, {table.m} factors, class counts {table.class_counts()}")

# Screening: how far from normal is each factor, and does it depend on the label?
screen = stats.screen_features(table)
print(stats.render_two_column(screen["chi_square"], "p_value", "Chi-square p-values", fmt="{:.3g}"))

split = stratified_split(table, SplitSpec(0.33, 15))
train, test = split.train, split.test

params = gbt.GbtParams(max_depth=3, n_estimators=300, learning_rate=0.1, subsample=0.8)
cv = modelsel.cross_validate(train, params, k=10, seed=15)
print(f"\n10-fold weighted F1: {cv.mean:.4f} +/- {cv.std:.4f}")

model = gbt.fit(train, params)
ev = evaluate(test.y, model.predict_label(test), model.predict_score(test))
print(f"test accuracy {ev.report.accuracy:.4f}, AUC {ev.roc.auc:.4f}")

shap = explain.tree_shap(model, train)
importance = explain.rank_features(shap)
print("\nmean |SHAP| ranking:")
for rank, j in enumerate(importance.order, start=1):
    print(f"  {rank:2d}. {importance.feature_names[j]:<12} {importance.mean_abs[j]:.4f}")

# Local accuracy: expected value plus the row's SHAP values gives its margin.
gap = shap.expected_value + shap.values.sum(axis=1) - model.predict_margin(train)
print(f"\nlargest local-accuracy gap: {np.abs(gap).max():.2e}")

plan = explain.select_features(importance, 6, schema_order=train.feature_names)
print(f"dropping {list(plan.dropped)}")
reduced = modelsel.cross_validate(train.select(plan.retained), params, k=10, seed=15)
print(f"10-fold weighted F1 on {len(plan.retained)} factors: {reduced.mean:.4f}")
