"""Binary classification metrics: confusion counts, per-class scores, ROC/AUC."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import LengthMismatch, SingleClassLabels


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


def _binary(values, name):
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must be binary")
    return arr.astype(np.int64)


def confusion(labels, predictions) -> ConfusionMatrix:
    y = _binary(labels, "labels")
    p = _binary(predictions, "predictions")
    if y.shape != p.shape:
        raise LengthMismatch(f"{y.size} labels vs {p.size} predictions")
    return ConfusionMatrix(
        tp=int(np.sum((y == 1) & (p == 1))),
        fp=int(np.sum((y == 0) & (p == 1))),
        tn=int(np.sum((y == 0) & (p == 0))),
        fn=int(np.sum((y == 1) & (p == 0))),
    )


def _ratio(num, den, name, flags):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def _f1(precision, recall):
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class ClassReport:
    accuracy: float
    precision_pos: float
    recall_pos: float
    f1_pos: float
    precision_neg: float
    recall_neg: float
    f1_neg: float
    weighted_f1: float
    support_pos: int
    support_neg: int
    degenerate: tuple = field(default=())

    def to_dict(self) -> dict:
        keys = ("accuracy", "precision_pos", "recall_pos", "f1_pos",
                "precision_neg", "recall_neg", "f1_neg", "weighted_f1")
        d = {k: getattr(self, k) for k in keys}
        d["support_pos"] = self.support_pos
        d["support_neg"] = self.support_neg
        d["degenerate"] = list(self.degenerate)
        d["percent"] = {k: round(100 * getattr(self, k), 2) for k in keys}
        return d


def class_report(cm: ConfusionMatrix) -> ClassReport:
    """Accuracy plus precision/recall/F1 with each class taken as positive.

    A zero denominator yields 0 and the metric's name is listed in
    ``degenerate``.
    """
    flags = []
    tp, fp, tn, fn = cm.tp, cm.fp, cm.tn, cm.fn
    acc = _ratio(tp + tn, cm.total, "accuracy", flags)
    p_pos = _ratio(tp, tp + fp, "precision_pos", flags)
    r_pos = _ratio(tp, tp + fn, "recall_pos", flags)
    p_neg = _ratio(tn, tn + fn, "precision_neg", flags)
    r_neg = _ratio(tn, tn + fp, "recall_neg", flags)
    f_pos = _f1(p_pos, r_pos)
    f_neg = _f1(p_neg, r_neg)
    sup_pos, sup_neg = tp + fn, tn + fp
    weighted = _ratio(sup_pos * f_pos + sup_neg * f_neg, sup_pos + sup_neg, "weighted_f1", flags)
    return ClassReport(acc, p_pos, r_pos, f_pos, p_neg, r_neg, f_neg, weighted,
                       sup_pos, sup_neg, tuple(flags))


def weighted_f1(labels, predictions) -> float:
    return class_report(confusion(labels, predictions)).weighted_f1


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    def points(self) -> list:
        return [[float(a), float(b)] for a, b in zip(self.fpr, self.tpr)]

    def trapezoid_auc(self) -> float:
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1]) / 2))


def mann_whitney_auc(labels, scores) -> float:
    """P(score+ > score-) + P(tie)/2 from average ranks."""
    y = _binary(labels, "labels")
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassLabels("AUC needs both classes")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(s.size)
    sorted_s = s[order]
    # average rank over each run of tied scores
    starts = np.flatnonzero(np.r_[True, sorted_s[1:] != sorted_s[:-1]])
    ends = np.r_[starts[1:], s.size]
    for a, b in zip(starts, ends):
        ranks[order[a:b]] = (a + b + 1) / 2.0
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc(labels, scores) -> RocCurve:
    y = _binary(labels, "labels")
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape:
        raise LengthMismatch(f"{y.size} labels vs {s.size} scores")
    auc = mann_whitney_auc(y, s)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    # last position of each run of equal scores: rows with score >= t are positive
    last = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    tps = np.cumsum(y_sorted)[last]
    fps = last + 1 - tps
    thresholds = s_sorted[last]
    fpr = np.r_[0.0, fps / n_neg]
    tpr = np.r_[0.0, tps / n_pos]
    return RocCurve(fpr, tpr, np.r_[np.inf, thresholds], auc)


@dataclass(frozen=True)
class EvalReport:
    confusion: ConfusionMatrix
    report: ClassReport
    roc: RocCurve

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.to_dict(),
            "class_report": self.report.to_dict(),
            "roc": self.roc.points(),
            "auc": self.roc.auc,
        }


def evaluate(labels, predictions, scores) -> EvalReport:
    cm = confusion(labels, predictions)
    return EvalReport(cm, class_report(cm), roc_auc(labels, scores))


def write_roc_csv(path, roc: RocCurve) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "fpr", "tpr"])
        for t, a, b in zip(roc.thresholds, roc.fpr, roc.tpr):
            w.writerow([repr(float(t)), repr(float(a)), repr(float(b))])


@dataclass(frozen=True)
class LearningCurve:
    fractions: tuple
    train_sizes: tuple
    train_scores: tuple
    cv_scores: tuple
    cv_std: tuple

    def to_dict(self) -> dict:
        return {"fractions": list(self.fractions), "train_sizes": list(self.train_sizes),
                "train_scores": list(self.train_scores), "cv_scores": list(self.cv_scores),
                "cv_std": list(self.cv_std)}


def learning_curve(table, params, fractions=(0.1, 0.325, 0.55, 0.775, 1.0),
                   k: int = 10, seed: int = 15, fit=None) -> LearningCurve:
    """Cross-validated weighted F1 on growing stratified subsamples of ``table``.

    Each fraction draws its subsample with a seed derived from ``(seed,
    position)``; fraction 1.0 uses the full table, so that entry equals a
    plain cross-validation of ``table``.
    """
    from .dataset import stratified_subsample
    from .modelsel import cross_validate, derive_seed

    fractions = tuple(float(f) for f in fractions)
    if not fractions or any(b <= a for a, b in zip(fractions, fractions[1:])):
        raise ValueError("fractions must be nonempty and strictly increasing")
    if fractions[0] <= 0 or fractions[-1] > 1:
        raise ValueError("fractions must lie in (0, 1]")
    sizes, tr, cv, sd = [], [], [], []
    for pos, frac in enumerate(fractions):
        idx = stratified_subsample(table, frac, derive_seed(seed, pos))
        sub = table.take(idx)
        res = cross_validate(sub, params, k, seed, fit=fit, with_train=True)
        sizes.append(int(idx.size))
        tr.append(res.train_mean)
        cv.append(res.mean)
        sd.append(res.std)
    return LearningCurve(fractions, tuple(sizes), tuple(tr), tuple(cv), tuple(sd))
