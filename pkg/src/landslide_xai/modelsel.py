"""Stratified k-fold cross-validation and exhaustive grid search on weighted F1."""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path

import numpy as np

from . import baselines, gbt
from .dataset import DataTable
from .errors import ClassSmallerThanK, ConfigError, FoldFitError, LandslideError
from .metrics import weighted_f1

# kind -> (params class, fit function, model class)
REGISTRY = {
    "gbt": (gbt.GbtParams, gbt.fit, gbt.GbtModel),
    "knn": (baselines.KnnParams, baselines.knn_fit, baselines.KnnModel),
    "logreg": (baselines.LogRegParams, baselines.logreg_fit, baselines.LogRegModel),
    "svm": (baselines.SvmParams, baselines.svm_fit, baselines.SvmModel),
    "adaboost": (baselines.AdaBoostParams, baselines.adaboost_fit, baselines.AdaBoostModel),
}

KINDS = tuple(REGISTRY)

# candidate lists in the order they are tabulated for the study
DEFAULT_GRIDS = {
    "gbt": {
        "max_depth": [2, 3, 5, 6, 8],
        "n_estimators": [500, 1500, 3000, 5000],
        "learning_rate": [0.01, 0.1, 0.05, 0.3, 0.5],
        "gamma": [0, 0.1, 0.5, 1, 2],
        "subsample": [0.5, 0.7, 0.8, 0.9, 1],
    },
    "knn": {"n_neighbors": [3, 5, 7, 9, 11, 13], "p": [1, 2]},
    "logreg": {"C": [0.001, 0.01, 0.1, 1, 10, 100]},
    "svm": {"C": [0.01, 0.1, 1, 10, 100], "kernel": ["linear", "rbf"]},
    "adaboost": {
        "n_estimators": [10, 50, 100, 500, 1000, 1500, 3000],
        "learning_rate": [0.001, 0.01, 0.1, 0.15, 0.2, 0.3, 0.5, 1],
    },
}


def derive_seed(*parts: int) -> int:
    """Stable 32-bit seed from a tuple of nonnegative integers."""
    ss = np.random.SeedSequence([int(p) for p in parts])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def params_class(kind: str):
    try:
        return REGISTRY[kind][0]
    except KeyError:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {', '.join(KINDS)}")


def fit_model(train: DataTable, params):
    return REGISTRY[params.kind][1](train, params)


def model_from_dict(d: dict):
    kind = d.get("kind")
    if kind not in REGISTRY:
        raise ConfigError(f"unknown model kind {kind!r}")
    return REGISTRY[kind][2].from_dict(d)


def load_model(path):
    with Path(path).open(encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def make_params(kind: str, point: dict, base=None):
    cls = params_class(kind)
    names = {f.name for f in fields(cls)}
    unknown = set(point) - names
    if unknown:
        raise ConfigError(f"{kind} has no parameter(s) {sorted(unknown)}")
    return replace(base, **point) if base is not None else cls(**point)


@dataclass(frozen=True)
class ParamGrid:
    """Per-parameter candidate lists; iteration varies the last parameter fastest."""

    kind: str
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        params_class(self.kind)
        vals = {k: list(v) for k, v in self.values.items()}
        for k, v in vals.items():
            if not v:
                raise ConfigError(f"grid for {self.kind}.{k} is empty")
        make_params(self.kind, {k: v[0] for k, v in vals.items()})
        object.__setattr__(self, "values", vals)

    @classmethod
    def default(cls, kind: str) -> "ParamGrid":
        params_class(kind)
        return cls(kind, {k: list(v) for k, v in DEFAULT_GRIDS[kind].items()})

    @property
    def size(self) -> int:
        return math.prod(len(v) for v in self.values.values())

    def points(self) -> list:
        keys = list(self.values)
        return [dict(zip(keys, combo)) for combo in itertools.product(*self.values.values())]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "values": self.values}


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    folds: np.ndarray
    seed: int

    def indices(self, fold: int):
        """(train indices, validation indices) for one fold."""
        return np.flatnonzero(self.folds != fold), np.flatnonzero(self.folds == fold)

    def to_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "folds": self.folds.tolist()}


def stratified_kfold(table: DataTable, k: int, seed: int) -> FoldAssignment:
    """Shuffle each class with a seeded RNG and deal its rows round-robin.

    The dealing counter carries over from class 0 to class 1, so surplus rows
    of the second class start where the first class stopped and fold sizes
    stay within one of each other.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    counts = table.class_counts()
    for cls, c in enumerate(counts):
        if c < k:
            raise ClassSmallerThanK(f"class {cls} has {c} rows, fewer than k={k}")
    rng = np.random.default_rng(derive_seed(seed))
    folds = np.empty(table.n, dtype=np.int64)
    counter = 0
    for cls in (0, 1):
        idx = rng.permutation(np.flatnonzero(table.y == cls))
        folds[idx] = (counter + np.arange(idx.size)) % k
        counter += idx.size
    return FoldAssignment(k, folds, seed)


@dataclass(frozen=True)
class CvResult:
    params: dict
    fold_scores: tuple
    mean: float
    std: float
    train_scores: tuple = ()
    train_mean: float = float("nan")
    error: str = ""

    def to_dict(self) -> dict:
        failed = bool(self.error)
        d = {"params": self.params, "fold_scores": list(self.fold_scores),
             "mean": None if failed else self.mean, "std": None if failed else self.std}
        if self.train_scores:
            d["train_scores"] = list(self.train_scores)
        if failed:
            d["error"] = self.error
        return d


def _summarize(params_dict, scores, train_scores=()):
    s = np.asarray(scores, dtype=np.float64)
    tr = tuple(float(v) for v in train_scores)
    return CvResult(params_dict, tuple(float(v) for v in s), float(s.mean()), float(s.std()),
                    tr, float(np.mean(tr)) if tr else float("nan"))


def _with_seed(params, seed):
    if is_dataclass(params) and any(f.name == "seed" for f in fields(params)):
        return replace(params, seed=seed)
    return params


def cross_validate(table: DataTable, params, k: int = 10, seed: int = 15, fit=None,
                   with_train: bool = False, folds: FoldAssignment | None = None) -> CvResult:
    """Weighted F1 of ``params`` on each held-out fold.

    Folds come from ``stratified_kfold(table, k, seed)``. A model with a seed
    is trained with ``derive_seed(seed, fold)`` on each fold, so every grid
    point sees the same randomness on the same fold.
    """
    fit = fit or fit_model
    folds = folds or stratified_kfold(table, k, seed)
    scores, train_scores = [], []
    for f in range(folds.k):
        tr_idx, va_idx = folds.indices(f)
        train, valid = table.take(tr_idx), table.take(va_idx)
        try:
            model = fit(train, _with_seed(params, derive_seed(seed, f)))
            scores.append(weighted_f1(valid.y, model.predict_label(valid)))
            if with_train:
                train_scores.append(weighted_f1(train.y, model.predict_label(train)))
        except LandslideError as exc:
            raise FoldFitError(f, exc) from exc
    return _summarize(_params_dict(params), scores, train_scores)


def _params_dict(params) -> dict:
    if is_dataclass(params):
        return {f.name: getattr(params, f.name) for f in fields(params)}
    return dict(params) if isinstance(params, dict) else {"value": repr(params)}


def _gbt_staged(table, base, n_list, folds, seed, with_train=False):
    """CV results for GBT params differing only in n_estimators, from one fit per fold.

    Boosting round t depends only on earlier rounds and the RNG stream, so the
    first n trees of a longer fit equal a fit with n_estimators = n.
    """
    n_max = max(n_list)
    scores = {n: [] for n in n_list}
    train_scores = {n: [] for n in n_list}
    for f in range(folds.k):
        tr_idx, va_idx = folds.indices(f)
        train, valid = table.take(tr_idx), table.take(va_idx)
        try:
            model = gbt.fit(train, replace(base, n_estimators=n_max, seed=derive_seed(seed, f)))
        except LandslideError as exc:
            raise FoldFitError(f, exc) from exc
        for n in n_list:
            sub = gbt.GbtModel(model.trees[:n], model.base_margin,
                               replace(model.params, n_estimators=n), model.feature_names)
            scores[n].append(weighted_f1(valid.y, sub.predict_label(valid)))
            if with_train:
                train_scores[n].append(weighted_f1(train.y, sub.predict_label(train)))
    return {n: _summarize(_params_dict(replace(base, n_estimators=n)), scores[n], train_scores[n])
            for n in n_list}


@dataclass(frozen=True)
class SearchResult:
    kind: str
    results: tuple
    best: int

    @property
    def best_result(self) -> CvResult:
        return self.results[self.best]

    @property
    def best_params(self) -> dict:
        return self.results[self.best].params

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.results)

    def to_dict(self) -> dict:
        best = self.results[self.best]
        return {"kind": self.kind, "n_points": len(self.results), "best_index": self.best,
                "best_params": best.params,
                "best_mean": None if best.error else best.mean,
                "best_std": None if best.error else best.std}


def _failed(params_dict, exc) -> CvResult:
    return CvResult(params_dict, (), float("-inf"), float("nan"),
                    error=f"{type(exc).__name__}: {exc}")


def _evaluate_group(args):
    """Work unit: a list of (grid index, params) sharing everything but n_estimators."""
    table, kind, members, k, seed, folds, fit = args
    out = {}
    if fit is None and kind == "gbt" and len(members) > 1:
        base = members[0][1]
        try:
            staged = _gbt_staged(table, base, [p.n_estimators for _, p in members], folds, seed)
            for i, p in members:
                out[i] = staged[p.n_estimators]
            return out
        except LandslideError:
            pass  # fall back to per-point evaluation to isolate the failure
    for i, p in members:
        try:
            out[i] = cross_validate(table, p, k, seed, fit=fit, folds=folds)
        except LandslideError as exc:
            out[i] = _failed(_params_dict(p), exc)
    return out


def _groups(kind, params_list, fit):
    if fit is not None or kind != "gbt":
        return [[(i, p)] for i, p in enumerate(params_list)]
    groups = {}
    for i, p in enumerate(params_list):
        key = replace(p, n_estimators=1)
        groups.setdefault(key, []).append((i, p))
    return list(groups.values())


def grid_search(table: DataTable, grid: ParamGrid, k: int = 10, seed: int = 15, fit=None,
                n_jobs: int = 1, log_path=None, base_params=None) -> SearchResult:
    """Cross-validate every grid point and pick the best mean weighted F1.

    A point whose fit fails scores -inf and the search continues. Ties keep
    the earliest point in grid order. Results are always merged in grid
    order, so ``n_jobs`` never changes the outcome.
    """
    points = grid.points()
    if not points:
        raise ConfigError("grid is empty")
    params_list = [make_params(grid.kind, pt, base_params) for pt in points]
    folds = stratified_kfold(table, k, seed)
    work = [(table, grid.kind, g, k, seed, folds, fit)
            for g in _groups(grid.kind, params_list, fit)]
    merged = {}
    if n_jobs == 1 or len(work) == 1:
        for w in work:
            merged.update(_evaluate_group(w))
    else:
        with ProcessPoolExecutor(max_workers=n_jobs if n_jobs > 0 else None) as pool:
            for out in pool.map(_evaluate_group, work):
                merged.update(out)
    results = tuple(merged[i] for i in range(len(points)))
    means = np.array([r.mean for r in results])
    best = int(np.argmax(means))  # first occurrence wins ties
    res = SearchResult(grid.kind, results, best)
    if log_path is not None:
        Path(log_path).write_text(res.to_jsonl(), encoding="utf-8")
    return res
