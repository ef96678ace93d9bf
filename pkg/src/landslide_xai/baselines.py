"""Comparison classifiers: k-nearest neighbours, logistic regression, SVM, AdaBoost.

Every fitted model exposes ``predict_score`` and ``predict_label`` and
serializes to a JSON envelope with a ``kind`` discriminator.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import DataTable
from .errors import EmptyTrain, LengthMismatch, NonConvergence, SingleClassTrain, TooFewRows
from .gbt import as_matrix, sigmoid


def _check_two_classes(train: DataTable):
    if train.n == 0:
        raise EmptyTrain("training table is empty")
    pos = int(train.y.sum())
    if pos == 0 or pos == train.n:
        raise SingleClassTrain("training data contains a single class")


def _standardizer(X):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


class _Model:
    kind = ""

    def predict_score(self, rows):
        raise NotImplementedError

    def predict_label(self, rows):
        raise NotImplementedError

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# --------------------------------------------------------------------------
# k-nearest neighbours

@dataclass(frozen=True)
class KnnParams:
    n_neighbors: int = 7
    p: int = 1

    kind = "knn"

    def __post_init__(self):
        if self.n_neighbors < 1 or self.n_neighbors % 2 == 0:
            raise ValueError("n_neighbors must be an odd integer >= 1")
        if self.p not in (1, 2):
            raise ValueError("p must be 1 or 2")


def minkowski_distance(x, y, p: int = 2) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"vectors of length {x.size} and {y.size}")
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    return float(np.sum(np.abs(x - y) ** p) ** (1.0 / p))


def _pairwise(A, B, p):
    diff = np.abs(A[:, None, :] - B[None, :, :])
    if p == 1:
        return diff.sum(axis=2)
    return np.sqrt((diff ** 2).sum(axis=2))


class KnnModel(_Model):
    kind = "knn"

    def __init__(self, X, y, params: KnnParams, feature_names=()):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.int64)
        self.params = params
        self.feature_names = tuple(feature_names)

    def predict_score(self, rows):
        """Fraction of positive labels among the k nearest training rows."""
        Q = as_matrix(rows, self.feature_names)
        d = _pairwise(Q, self.X, self.params.p)
        # stable sort: equal distances resolve to the lower training index
        nearest = np.argsort(d, axis=1, kind="stable")[:, :self.params.n_neighbors]
        return self.y[nearest].mean(axis=1)

    def predict_label(self, rows):
        # a tied vote goes to class 0
        return (self.predict_score(rows) > 0.5).astype(np.int64)

    def to_dict(self):
        return {"kind": self.kind, "params": asdict(self.params),
                "feature_names": list(self.feature_names),
                "X": self.X.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["X"], dtype=np.float64).reshape(len(d["y"]), -1), d["y"],
                   KnnParams(**d["params"]), d["feature_names"])


def knn_fit(train: DataTable, params: KnnParams | None = None) -> KnnModel:
    params = params or KnnParams()
    if train.n == 0:
        raise EmptyTrain("training table is empty")
    if params.n_neighbors > train.n:
        raise TooFewRows(f"n_neighbors={params.n_neighbors} exceeds {train.n} training rows")
    return KnnModel(train.X, train.y, params, train.feature_names)


def knn_predict(model: KnnModel, rows):
    return model.predict_label(rows)


# --------------------------------------------------------------------------
# logistic regression

@dataclass(frozen=True)
class LogRegParams:
    C: float = 0.01
    max_iter: int = 100
    tol: float = 1e-8

    kind = "logreg"

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be positive")


def logreg_objective(w, b, Z, y, C):
    """Negative log-likelihood plus ``||w||^2 / (2C)``; intercept unpenalized."""
    z = Z @ w + b
    return float(np.sum(np.logaddexp(0.0, z) - y * z) + w @ w / (2.0 * C))


def logreg_gradient(w, b, Z, y, C):
    r = sigmoid(Z @ w + b) - y
    return np.r_[Z.T @ r + w / C, r.sum()]


class LogRegModel(_Model):
    kind = "logreg"

    def __init__(self, weights, intercept, mean, scale, params, feature_names=(),
                 n_iter=0, grad_norm=0.0):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.intercept = float(intercept)
        self.mean = np.asarray(mean, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)
        self.params = params
        self.feature_names = tuple(feature_names)
        self.n_iter = n_iter
        self.grad_norm = grad_norm

    def decision_function(self, rows):
        Z = (as_matrix(rows, self.feature_names) - self.mean) / self.scale
        return Z @ self.weights + self.intercept

    def predict_score(self, rows):
        return sigmoid(self.decision_function(rows))

    def predict_label(self, rows):
        return (self.decision_function(rows) >= 0.0).astype(np.int64)

    def to_dict(self):
        return {"kind": self.kind, "params": asdict(self.params),
                "feature_names": list(self.feature_names),
                "weights": self.weights.tolist(), "intercept": self.intercept,
                "mean": self.mean.tolist(), "scale": self.scale.tolist(),
                "n_iter": self.n_iter, "grad_norm": self.grad_norm}

    @classmethod
    def from_dict(cls, d):
        return cls(d["weights"], d["intercept"], d["mean"], d["scale"],
                   LogRegParams(**d["params"]), d["feature_names"], d["n_iter"], d["grad_norm"])


def logreg_fit(train: DataTable, params: LogRegParams | None = None) -> LogRegModel:
    """L2-penalized maximum likelihood by damped Newton iterations from zero.

    Features are z-scored with training statistics first. Stops once the
    gradient norm of the penalized objective is at most ``tol``.
    """
    params = params or LogRegParams()
    _check_two_classes(train)
    mean, scale = _standardizer(train.X)
    Z = (train.X - mean) / scale
    y = train.y.astype(np.float64)
    n, m = Z.shape
    A = np.column_stack([Z, np.ones(n)])
    penalty = np.r_[np.full(m, 1.0 / params.C), 0.0]
    theta = np.zeros(m + 1)

    def objective(t):
        return logreg_objective(t[:m], t[m], Z, y, params.C)

    f = objective(theta)
    for it in range(1, params.max_iter + 1):
        g = logreg_gradient(theta[:m], theta[m], Z, y, params.C)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= params.tol:
            return LogRegModel(theta[:m], theta[m], mean, scale, params,
                               train.feature_names, it - 1, gnorm)
        p = sigmoid(A @ theta)
        hess = (A * (p * (1 - p))[:, None]).T @ A + np.diag(penalty)
        hess[m, m] += 1e-12
        try:
            step = np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, g, rcond=None)[0]
        # backtracking line search on the objective (Armijo)
        t = 1.0
        slope = float(g @ step)
        while True:
            cand = theta - t * step
            fc = objective(cand)
            if fc <= f - 1e-4 * t * slope or t < 1e-10:
                break
            t *= 0.5
        if fc > f:
            break
        theta, f = cand, fc
    g = logreg_gradient(theta[:m], theta[m], Z, y, params.C)
    gnorm = float(np.linalg.norm(g))
    if gnorm <= params.tol:
        return LogRegModel(theta[:m], theta[m], mean, scale, params,
                           train.feature_names, params.max_iter, gnorm)
    raise NonConvergence(
        f"logistic regression stopped after {params.max_iter} iterations "
        f"with gradient norm {gnorm:.3e} > tol {params.tol:g}")


# --------------------------------------------------------------------------
# support vector machine

@dataclass(frozen=True)
class SvmParams:
    C: float = 10.0
    kernel: str = "rbf"
    sigma: float | None = None
    smo_tol: float = 1e-3
    max_passes: int = 100_000

    kind = "svm"

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.kernel not in ("linear", "rbf"):
            raise ValueError("kernel must be 'linear' or 'rbf'")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive")


def default_sigma(n_features: int) -> float:
    """Width giving ``1 / (2 sigma^2) = 1 / n_features``."""
    return math.sqrt(n_features / 2.0)


def kernel_matrix(A, B, kernel: str, sigma: float):
    if kernel == "linear":
        return A @ B.T
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * sigma * sigma))


def svm_dual_objective(alpha, y_pm, K) -> float:
    v = alpha * y_pm
    return float(alpha.sum() - 0.5 * v @ K @ v)


class SvmModel(_Model):
    kind = "svm"

    def __init__(self, support, dual_coef, bias, mean, scale, params, sigma,
                 feature_names=(), alpha=None, n_iter=0):
        self.support = np.asarray(support, dtype=np.float64)
        self.dual_coef = np.asarray(dual_coef, dtype=np.float64)  # alpha_i * y_i
        self.bias = float(bias)
        self.mean = np.asarray(mean, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)
        self.params = params
        self.sigma = float(sigma)
        self.feature_names = tuple(feature_names)
        self.alpha = None if alpha is None else np.asarray(alpha, dtype=np.float64)
        self.n_iter = n_iter

    def decision_function(self, rows):
        Z = (as_matrix(rows, self.feature_names) - self.mean) / self.scale
        if self.support.shape[0] == 0:
            return np.full(Z.shape[0], self.bias)
        K = kernel_matrix(Z, self.support, self.params.kernel, self.sigma)
        return K @ self.dual_coef + self.bias

    def predict_score(self, rows):
        return self.decision_function(rows)

    def predict_label(self, rows):
        return (self.decision_function(rows) >= 0.0).astype(np.int64)

    def to_dict(self):
        return {"kind": self.kind, "params": asdict(self.params), "sigma": self.sigma,
                "feature_names": list(self.feature_names),
                "support": self.support.tolist(), "dual_coef": self.dual_coef.tolist(),
                "bias": self.bias, "mean": self.mean.tolist(), "scale": self.scale.tolist(),
                "n_iter": self.n_iter}

    @classmethod
    def from_dict(cls, d):
        m = len(d["mean"])
        return cls(np.array(d["support"], dtype=np.float64).reshape(-1, m), d["dual_coef"],
                   d["bias"], d["mean"], d["scale"], SvmParams(**d["params"]), d["sigma"],
                   d["feature_names"], n_iter=d.get("n_iter", 0))


def svm_fit(train: DataTable, params: SvmParams | None = None) -> SvmModel:
    """Soft-margin SVM trained by SMO with maximal-violating-pair selection.

    Iterates until the KKT gap ``max_{I_up} -y G - min_{I_low} -y G`` drops to
    ``smo_tol``. Labels are mapped to -1/+1 and features z-scored.
    """
    params = params or SvmParams()
    _check_two_classes(train)
    mean, scale = _standardizer(train.X)
    Z = (train.X - mean) / scale
    y = np.where(train.y == 1, 1.0, -1.0)
    n = y.size
    C = float(params.C)
    sigma = params.sigma if params.sigma is not None else default_sigma(Z.shape[1])
    K = kernel_matrix(Z, Z, params.kernel, sigma)
    Q = K * np.outer(y, y)
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of 0.5 a'Qa - e'a
    tau = 1e-12

    it = 0
    while True:
        minus_yg = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        i = int(np.argmax(np.where(up, minus_yg, -np.inf)))
        j = int(np.argmin(np.where(low, minus_yg, np.inf)))
        gap = minus_yg[i] - minus_yg[j]
        if gap <= params.smo_tol:
            break
        if it >= params.max_passes:
            raise NonConvergence(f"SMO did not reach tol {params.smo_tol:g} in "
                                 f"{params.max_passes} iterations (gap {gap:.3e})")
        it += 1
        # errors relative to the current decision values (bias cancels)
        ei, ej = y[i] * G[i], y[j] * G[j]
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if eta <= 0:
            eta = tau
        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            lo, hi = max(0.0, aj_old - ai_old), min(C, C + aj_old - ai_old)
        else:
            lo, hi = max(0.0, ai_old + aj_old - C), min(C, ai_old + aj_old)
        aj = min(max(aj_old + y[j] * (ei - ej) / eta, lo), hi)
        ai = ai_old + y[i] * y[j] * (aj_old - aj)
        # snap round-off residue onto the box so a bound variable cannot stall the pair
        snap = 1e-12 * C
        ai = 0.0 if ai < snap else (C if ai > C - snap else ai)
        aj = 0.0 if aj < snap else (C if aj > C - snap else aj)
        alpha[i], alpha[j] = ai, aj
        G += Q[:, i] * (ai - ai_old) + Q[:, j] * (aj - aj_old)

    minus_yg = -y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        bias = float(minus_yg[free].mean())
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        hi_b = minus_yg[up].max() if up.any() else 0.0
        lo_b = minus_yg[low].min() if low.any() else 0.0
        bias = float((hi_b + lo_b) / 2.0)
    sv = alpha > 0
    model = SvmModel(Z[sv], (alpha * y)[sv], bias, mean, scale, params, sigma,
                     train.feature_names, alpha=alpha.copy(), n_iter=it)
    return model


# --------------------------------------------------------------------------
# AdaBoost with decision stumps

@dataclass(frozen=True)
class AdaBoostParams:
    n_estimators: int = 1000
    learning_rate: float = 1.0

    kind = "adaboost"

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


_EPS_CLAMP = 1e-10


def best_stump(X, y_pm, w):
    """Lowest weighted-error stump ``polarity * (+1 if x[f] >= thr else -1)``.

    Ties go to the lower feature, then the lower threshold, then polarity +1.
    Returns ``(error, feature, threshold, polarity)``.
    """
    best = (np.inf, -1, 0.0, 1)
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ws = w[order] * y_pm[order]
        cut = np.flatnonzero(xs[1:] > xs[:-1])
        if cut.size == 0:
            continue
        # polarity +1 errs on positives left of thr and negatives right of it
        left_pos = np.cumsum(np.where(ws > 0, ws, 0.0))[cut]
        left_neg = np.cumsum(np.where(ws < 0, -ws, 0.0))[cut]
        tot_pos = np.sum(np.where(ws > 0, ws, 0.0))
        tot_neg = np.sum(np.where(ws < 0, -ws, 0.0))
        err_plus = left_pos + (tot_neg - left_neg)
        err_minus = (tot_pos - left_pos) + left_neg
        thr = 0.5 * (xs[cut] + xs[cut + 1])
        for errs, pol in ((err_plus, 1), (err_minus, -1)):
            k = int(np.argmin(errs))
            e = float(errs[k])
            if e < best[0] - 1e-15 or (abs(e - best[0]) <= 1e-15 and
                                        (f, thr[k], -pol) < (best[1], best[2], -best[3])):
                best = (e, f, float(thr[k]), pol)
    return best


def _stump_predict(X, f, thr, pol):
    return pol * np.where(X[:, f] >= thr, 1.0, -1.0)


class AdaBoostModel(_Model):
    kind = "adaboost"

    def __init__(self, stumps, params, feature_names=(), weight_history=()):
        self.stumps = tuple(tuple(s) for s in stumps)  # (feature, threshold, polarity, alpha)
        self.params = params
        self.feature_names = tuple(feature_names)
        self.weight_history = weight_history

    def staged_score(self, rows):
        X = as_matrix(rows, self.feature_names)
        score = np.zeros(X.shape[0])
        for f, thr, pol, a in self.stumps:
            score = score + a * _stump_predict(X, int(f), thr, pol)
            yield score

    def predict_score(self, rows):
        X = as_matrix(rows, self.feature_names)
        score = np.zeros(X.shape[0])
        for f, thr, pol, a in self.stumps:
            score += a * _stump_predict(X, int(f), thr, pol)
        return score

    def predict_label(self, rows):
        return (self.predict_score(rows) >= 0.0).astype(np.int64)

    def to_dict(self):
        return {"kind": self.kind, "params": asdict(self.params),
                "feature_names": list(self.feature_names),
                "stumps": [{"feature": int(f), "threshold": float(t), "polarity": int(p),
                            "alpha": float(a)} for f, t, p, a in self.stumps]}

    @classmethod
    def from_dict(cls, d):
        stumps = [(s["feature"], s["threshold"], s["polarity"], s["alpha"]) for s in d["stumps"]]
        return cls(stumps, AdaBoostParams(**d["params"]), d["feature_names"])


def adaboost_fit(train: DataTable, params: AdaBoostParams | None = None,
                 keep_weights: bool = False) -> AdaBoostModel:
    """Discrete AdaBoost over decision stumps.

    Stump weight is ``learning_rate * ln((1 - err) / err) / 2`` with ``err``
    clamped to [1e-10, 1 - 1e-10]. Boosting stops early once a stump reaches
    zero error (after adding it) or when the best stump has error >= 0.5.
    """
    params = params or AdaBoostParams()
    _check_two_classes(train)
    X = train.X
    y = np.where(train.y == 1, 1.0, -1.0)
    w = np.full(y.size, 1.0 / y.size)
    stumps, history = [], []
    for _ in range(params.n_estimators):
        err, f, thr, pol = best_stump(X, y, w)
        if f < 0 or err >= 0.5:
            break
        eps = min(max(err, _EPS_CLAMP), 1.0 - _EPS_CLAMP)
        alpha = params.learning_rate * 0.5 * math.log((1.0 - eps) / eps)
        stumps.append((f, thr, pol, alpha))
        w = w * np.exp(-alpha * y * _stump_predict(X, f, thr, pol))
        w /= w.sum()
        if keep_weights:
            history.append(w.copy())
        if err <= _EPS_CLAMP:
            break
    return AdaBoostModel(stumps, params, train.feature_names, tuple(history))
