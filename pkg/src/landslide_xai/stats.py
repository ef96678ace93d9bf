"""Screening tests: Shapiro-Wilk normality and chi-square independence."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .dataset import CATEGORICAL, DataTable, quantile_bin
from .errors import (
    ConstantSample,
    LandslideError,
    LengthMismatch,
    SampleSizeOutOfRange,
    ZeroExpectedCell,
)

# Royston (1992, 1995) polynomial approximations, lowest order first
_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(coef, x):
    return np.polynomial.polynomial.polyval(x, coef)


@dataclass(frozen=True)
class NormalityReport:
    feature: str
    w_statistic: float
    p_value: float
    n: int


def shapiro_weights(n: int) -> np.ndarray:
    """Antisymmetric coefficient vector ``a`` for ordered samples of size n."""
    if n < 3:
        raise SampleSizeOutOfRange(f"need n >= 3, got {n}")
    if n == 3:
        half = np.array([math.sqrt(0.5)])
    else:
        nn2 = n // 2
        i = np.arange(1, nn2 + 1)
        m = special.ndtri((i - 0.375) / (n + 0.25))  # lower-tail, negative
        summ2 = 2.0 * np.sum(m * m)
        ssumm2 = math.sqrt(summ2)
        rsn = 1.0 / math.sqrt(n)
        half = np.empty(nn2)
        a1 = _poly(_C1, rsn) - m[0] / ssumm2
        if n > 5:
            a2 = -m[1] / ssumm2 + _poly(_C2, rsn)
            fac = math.sqrt((summ2 - 2 * m[0] ** 2 - 2 * m[1] ** 2)
                            / (1 - 2 * a1 ** 2 - 2 * a2 ** 2))
            half[1] = a2
            start = 2
        else:
            fac = math.sqrt((summ2 - 2 * m[0] ** 2) / (1 - 2 * a1 ** 2))
            start = 1
        half[0] = a1
        half[start:] = -m[start:] / fac
    a = np.zeros(n)
    k = half.size
    a[:k] = -half
    a[n - k:] = half[::-1]
    return a


def _shapiro_pvalue(w: float, n: int) -> float:
    if n == 3:
        # exact distribution for n = 3; W >= 3/4
        p = 6.0 / math.pi * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return min(max(p, 0.0), 1.0)
    y = math.log1p(-w) if w < 1.0 else -math.inf
    if n <= 11:
        gamma = _poly(_G, n)
        if y >= gamma:
            return 1e-99
        y = -math.log(gamma - y)
        mean = _poly(_C3, n)
        sd = math.exp(_poly(_C4, n))
    else:
        ln = math.log(n)
        mean = _poly(_C5, ln)
        sd = math.exp(_poly(_C6, ln))
    if y == -math.inf:
        return 1.0
    return float(special.ndtr(-(y - mean) / sd))


def shapiro_wilk(sample, feature: str = "") -> NormalityReport:
    """Shapiro-Wilk W and its p-value via Royston's approximation.

    Valid for 3 <= n <= 5000. The statistic is computed on range-scaled,
    centred data so it is invariant to affine rescaling of the input.
    """
    x = np.sort(np.asarray(sample, dtype=np.float64))
    n = x.size
    if not 3 <= n <= 5000:
        raise SampleSizeOutOfRange(f"Shapiro-Wilk needs 3 <= n <= 5000, got {n}")
    span = x[-1] - x[0]
    if span <= 0 or not np.isfinite(span):
        raise ConstantSample(f"{feature or 'sample'} is constant")
    z = (x - x.mean()) / span
    ssq = float(np.dot(z, z))
    if ssq == 0.0:
        raise ConstantSample(f"{feature or 'sample'} is constant")
    a = shapiro_weights(n)
    w = float(np.dot(a, z)) ** 2 / ssq
    w = min(w, 1.0)
    return NormalityReport(feature, w, _shapiro_pvalue(w, n), n)


@dataclass(frozen=True)
class ContingencyTable:
    observed: np.ndarray
    row_levels: tuple = ()

    def __post_init__(self):
        obs = np.asarray(self.observed)
        if obs.ndim != 2 or obs.size == 0 or (obs < 0).any():
            raise ValueError("observed must be a nonempty 2-D array of counts")
        object.__setattr__(self, "observed", obs)

    @property
    def row_totals(self) -> np.ndarray:
        return self.observed.sum(axis=1)

    @property
    def col_totals(self) -> np.ndarray:
        return self.observed.sum(axis=0)

    @property
    def total(self):
        return self.observed.sum()

    @property
    def expected(self) -> np.ndarray:
        return np.outer(self.row_totals, self.col_totals) / self.total


def build_contingency(feature, labels, bins: int = 10, categorical: bool = False) -> ContingencyTable:
    """Cross-tabulate a feature against binary labels (rows = levels).

    Categorical features use their distinct values as levels; continuous ones
    are cut into ``bins`` quantile bins first. Levels with no rows are dropped.
    """
    x = np.asarray(feature, dtype=np.float64)
    y = np.asarray(labels)
    if x.shape != y.shape:
        raise LengthMismatch(f"{x.size} feature values vs {y.size} labels")
    if categorical:
        levels, codes = np.unique(x, return_inverse=True)
        n_levels = levels.size
        level_names = tuple(float(v) for v in levels)
    else:
        codes = quantile_bin(x, bins)
        n_levels = bins
        level_names = tuple(range(bins))
    observed = np.zeros((n_levels, 2), dtype=np.int64)
    np.add.at(observed, (codes, y.astype(np.int64)), 1)
    keep = observed.sum(axis=1) > 0
    return ContingencyTable(observed[keep], tuple(l for l, k in zip(level_names, keep) if k))


@dataclass(frozen=True)
class ChiSquareReport:
    feature: str
    statistic: float
    dof: int
    p_value: float
    dof_rows_features: int

    def to_dict(self) -> dict:
        return {"feature": self.feature, "statistic": self.statistic, "dof": self.dof,
                "p_value": self.p_value, "dof_rows_features": self.dof_rows_features}


def chi_square_sf(statistic: float, dof: int) -> float:
    """Upper tail of the chi-square distribution, Q(dof/2, x/2)."""
    if statistic <= 0:
        return 1.0
    return float(special.gammaincc(dof / 2.0, statistic / 2.0))


def chi_square_test(table: ContingencyTable, feature: str = "",
                    n_instances: int | None = None, n_features: int | None = None) -> ChiSquareReport:
    """Pearson chi-square test of independence.

    ``dof_rows_features`` is ``(n_instances - 1) * (n_features - 1)`` when both are
    given and 0 otherwise; it is reported alongside and never used for the
    p-value.
    """
    obs = table.observed.astype(np.float64)
    expected = table.expected
    if (expected <= 0).any():
        raise ZeroExpectedCell(f"{feature or 'table'} has an expected count of zero")
    stat = float(np.sum((obs - expected) ** 2 / expected))
    r, c = obs.shape
    dof = (r - 1) * (c - 1)
    if dof < 1:
        raise ZeroExpectedCell(f"{feature or 'table'} has a single row or column")
    dof_rows_features = 0
    if n_instances is not None and n_features is not None:
        dof_rows_features = (n_instances - 1) * (n_features - 1)
    return ChiSquareReport(feature, stat, dof, chi_square_sf(stat, dof), dof_rows_features)


def screen_features(table: DataTable, bins: int = 10) -> dict:
    """Run both tests on every feature, isolating per-feature failures.

    Returns ``{"normality": [...], "chi_square": [...]}`` where each entry is
    a dict; a failing test yields ``{"feature", "error", "message"}``.
    """
    normality, chi = [], []
    for j, name in enumerate(table.feature_names):
        col = table.X[:, j]
        try:
            r = shapiro_wilk(col, name)
            normality.append({"feature": name, "w_statistic": r.w_statistic,
                              "p_value": r.p_value, "n": r.n})
        except LandslideError as exc:
            normality.append({"feature": name, "error": type(exc).__name__, "message": str(exc)})
        try:
            ct = build_contingency(col, table.y, bins, table.schema.kinds[j] == CATEGORICAL)
            chi.append(chi_square_test(ct, name, table.n, table.m).to_dict())
        except LandslideError as exc:
            chi.append({"feature": name, "error": type(exc).__name__, "message": str(exc)})
    return {"normality": normality, "chi_square": chi}


def render_two_column(rows, value_key: str, title: str, fmt: str = "{:.3f}") -> str:
    """Feature/value pairs laid out two per line."""
    cells = []
    for r in rows:
        v = r.get(value_key)
        cells.append((r["feature"], r.get("error", "?") if v is None else fmt.format(v)))
    half = (len(cells) + 1) // 2
    left, right = cells[:half], cells[half:]
    width = max([len(c[0]) for c in cells] + [7])
    vw = max([len(c[1]) for c in cells] + [len(value_key)])
    lines = [title,
             f"{'Feature':<{width}}  {value_key:>{vw}}  {'Feature':<{width}}  {value_key:>{vw}}"]
    for i, (name, val) in enumerate(left):
        line = f"{name:<{width}}  {val:>{vw}}"
        if i < len(right):
            line += f"  {right[i][0]:<{width}}  {right[i][1]:>{vw}}"
        lines.append(line.rstrip())
    return "\n".join(lines)
