"""Explainable landslide-susceptibility modelling on tabular causal factors."""

from .dataset import DataTable, FeatureSchema, SplitSpec, load_csv, make_surrogate, stratified_split
from .errors import LandslideError
from .explain import brute_force_shap, rank_features, select_features, tree_shap
from .gbt import GbtModel, GbtParams
from .gbt import fit as fit_gbt
from .metrics import class_report, confusion, evaluate, roc_auc
from .modelsel import ParamGrid, cross_validate, grid_search, stratified_kfold
from .stats import chi_square_test, shapiro_wilk

__version__ = "0.1.0"

__all__ = [
    "DataTable", "FeatureSchema", "SplitSpec", "load_csv", "make_surrogate", "stratified_split",
    "LandslideError", "brute_force_shap", "rank_features", "select_features", "tree_shap",
    "GbtModel", "GbtParams", "fit_gbt", "class_report", "confusion", "evaluate", "roc_auc",
    "ParamGrid", "cross_validate", "grid_search", "stratified_kfold", "chi_square_test",
    "shapiro_wilk",
]
