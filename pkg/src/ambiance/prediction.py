"""Top-k feature screening, least-squares prediction and leave-one-out evaluation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AlignmentError, SingularAfterRidge, TooFewFeatures, TooFewSamples
from .stats import CorrelationMatrix, correlate_arrays, spearman

TOP_K = 5
MIN_TRAIN = 10
MIN_PLACES_LOO = 12
COND_LIMIT = 1e10
RIDGE_SCALE = 1e-3


def rank_features(rho: np.ndarray, k: int = TOP_K) -> np.ndarray:
    """Indices of the ``k`` largest ``|rho|``; undefined entries never qualify, ties keep column order."""
    rho = np.asarray(rho, dtype=np.float64)
    defined = np.flatnonzero(~np.isnan(rho))
    if defined.size < k:
        raise TooFewFeatures(f"only {defined.size} features have a defined correlation, need {k}")
    order = np.argsort(-np.abs(rho[defined]), kind="stable")
    return defined[order[:k]]


def select_features(train_X, train_y, k: int = TOP_K) -> np.ndarray:
    """Column indices of the ``k`` features most rank-correlated with the target.

    Only the rows passed in are used, so callers must exclude held-out places.

    Raises:
        TooFewSamples: fewer than 10 training rows.
        TooFewFeatures: fewer than ``k`` features with a defined correlation.
    """
    X = np.asarray(train_X, dtype=np.float64)
    y = np.asarray(train_y, dtype=np.float64)
    if X.shape[0] < MIN_TRAIN:
        raise TooFewSamples(f"feature selection needs at least {MIN_TRAIN} training places, got {X.shape[0]}")
    rho, _, _ = correlate_arrays(X, y)
    return rank_features(rho[:, 0], k)


@dataclass(frozen=True, eq=False)
class LinearFit:
    intercept: float
    coef: np.ndarray
    medians: np.ndarray
    ridge: float

    def predict_raw(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        x = np.where(np.isnan(x), self.medians, x)
        return float(self.intercept + x @ self.coef)


def fit_linear(train_X, train_y) -> LinearFit:
    """OLS with intercept; ridge on the slopes when the normal matrix is ill-conditioned.

    Missing training values are replaced by the column's training median.

    Raises:
        SingularAfterRidge: the system stays unsolvable (for instance all columns constant).
    """
    X = np.asarray(train_X, dtype=np.float64)
    y = np.asarray(train_y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    with warnings.catch_warnings():
        # all-NaN columns are reported below, not as a numpy warning
        warnings.simplefilter("ignore", RuntimeWarning)
        medians = np.nanmedian(X, axis=0)
    if np.isnan(medians).any():
        raise SingularAfterRidge("a selected feature has no training values")
    X = np.where(np.isnan(X), medians, X)
    xm = X.mean(axis=0)
    ym = float(y.mean())
    Xc = X - xm
    A = Xc.T @ Xc
    b = Xc.T @ (y - ym)
    lam = 0.0
    cond = np.linalg.cond(A) if A.size else 1.0
    if not np.isfinite(cond) or cond > COND_LIMIT:
        lam = RIDGE_SCALE * float(np.trace(A)) / A.shape[0]
        if not lam > 0:
            raise SingularAfterRidge("normal matrix is zero: every selected feature is constant")
        A = A + lam * np.eye(A.shape[0])
        if np.linalg.cond(A) > 1.0 / np.finfo(float).eps:
            raise SingularAfterRidge("normal matrix remains singular after ridge regularisation")
    coef = np.linalg.solve(A, b)
    if not np.all(np.isfinite(coef)):
        raise SingularAfterRidge("non-finite regression coefficients")
    return LinearFit(ym - float(xm @ coef), coef, medians, lam)


def fit_predict(train_X, train_y, test_x, clamp: bool = True) -> float:
    """Fit on the training rows and predict one held-out row (clamped to [0, 1] by default)."""
    pred = fit_linear(train_X, train_y).predict_raw(test_x)
    return min(1.0, max(0.0, pred)) if clamp else pred


# ---------------------------------------------------------------- leave-one-out

@dataclass
class DimensionReport:
    dimension: str
    predictions: np.ndarray  # clamped
    actual: np.ndarray
    selected: list[list[str]]
    medians: list[list[float]]
    percent_mse: float
    percent_rmse: float
    accuracy_rho: float
    accuracy_p: float

    def to_json(self, place_ids: Sequence[str]) -> dict:
        def num(x):
            return None if math.isnan(x) else float(x)

        return {
            "dimension": self.dimension,
            "percent_mse": num(self.percent_mse),
            "percent_rmse": num(self.percent_rmse),
            "accuracy_rho": num(self.accuracy_rho),
            "accuracy_p": num(self.accuracy_p),
            "folds": [
                {"place_id": pid, "actual": float(a), "predicted": float(p), "features": feats,
                 "medians": [num(m) for m in med]}
                for pid, a, p, feats, med in zip(place_ids, self.actual, self.predictions, self.selected, self.medians)
            ],
        }


@dataclass
class PredictionReport:
    place_ids: list[str]
    dimensions: dict[str, DimensionReport] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"places": list(self.place_ids),
                "dimensions": [d.to_json(self.place_ids) for d in self.dimensions.values()]}

    def summary_rows(self) -> list[dict]:
        return [
            {"dimension": d.dimension, "percent_mse": d.percent_mse, "percent_rmse": d.percent_rmse,
             "accuracy_rho": d.accuracy_rho, "accuracy_p": d.accuracy_p}
            for d in self.dimensions.values()
        ]


def loo_evaluate(X, Y, feature_labels: Sequence[str], dimension_labels: Sequence[str],
                 place_ids: Sequence[str] | None = None, k: int = TOP_K,
                 dims: Sequence[int] | None = None) -> PredictionReport:
    """Leave-one-out predictions for every requested target column.

    In each fold the held-out place is removed before feature screening, so
    neither the selected features nor the fitted coefficients see its target.
    Screening for all dimensions shares one correlation pass per fold.

    Raises:
        TooFewSamples: fewer than 12 places.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    n = X.shape[0]
    if Y.shape[0] != n:
        raise AlignmentError(f"{n} profiles against {Y.shape[0]} target rows")
    if n < MIN_PLACES_LOO:
        raise TooFewSamples(f"leave-one-out needs at least {MIN_PLACES_LOO} places, got {n}")
    place_ids = list(place_ids) if place_ids is not None else [str(i) for i in range(n)]
    dims = list(range(Y.shape[1])) if dims is None else list(dims)
    preds = np.zeros((n, len(dims)))
    selected = [[None] * n for _ in dims]
    medians = [[None] * n for _ in dims]
    for i in range(n):
        train = np.arange(n) != i
        rho, _, _ = correlate_arrays(X[train], Y[train][:, dims])
        for c, d in enumerate(dims):
            cols = rank_features(rho[:, c], k)
            fit = fit_linear(X[train][:, cols], Y[train, d])
            preds[i, c] = min(1.0, max(0.0, fit.predict_raw(X[i, cols])))
            selected[c][i] = [feature_labels[j] for j in cols]
            medians[c][i] = [float(m) for m in fit.medians]
    report = PredictionReport(place_ids)
    for c, d in enumerate(dims):
        resid = preds[:, c] - Y[:, d]
        mse = float(np.mean(resid ** 2))
        acc = spearman(preds[:, c], Y[:, d])
        report.dimensions[dimension_labels[d]] = DimensionReport(
            dimension_labels[d], preds[:, c].copy(), Y[:, d].copy(), selected[c], medians[c],
            100.0 * mse, 100.0 * math.sqrt(mse), acc.rho, acc.p_value,
        )
    return report


# ---------------------------------------------------------------- comparison

@dataclass
class ComparisonRow:
    dimension: str
    people_rho: float
    people_p: float
    algorithm_rho: float
    algorithm_p: float
    winner: str  # "people" | "algorithm" | "tie"
    people_up: list[str]
    people_down: list[str]
    algorithm_up: list[str]
    algorithm_down: list[str]
    both_up: list[str]
    both_down: list[str]


@dataclass
class ComparisonTable:
    rows: list[ComparisonRow]


def top_signed(matrix: CorrelationMatrix, col: str, k: int = TOP_K, alpha: float | None = None) -> tuple[list[str], list[str]]:
    """Up to ``k`` significant positive and negative features for one ambiance column."""
    alpha = matrix.alpha if alpha is None else alpha
    j = matrix.cols.index(col)
    rho, p = matrix.rho[:, j], matrix.p[:, j]
    with np.errstate(invalid="ignore"):
        sig = np.flatnonzero(p < alpha)
    pos = sorted((i for i in sig if rho[i] > 0), key=lambda i: (-rho[i], i))[:k]
    neg = sorted((i for i in sig if rho[i] < 0), key=lambda i: (rho[i], i))[:k]
    return [matrix.rows[i] for i in pos], [matrix.rows[i] for i in neg]


def compare(face_driven: Sequence, on_the_spot: Sequence, report: PredictionReport,
            people_matrix: CorrelationMatrix | None = None,
            algorithm_matrix: CorrelationMatrix | None = None, k: int = TOP_K) -> ComparisonTable:
    """People-vs-algorithm accuracy per ambiance dimension.

    ``people_rho`` correlates face-driven with on-the-spot target scores
    across places; ``algorithm_rho`` is the report's prediction accuracy.

    Raises:
        AlignmentError: place ids or dimensions do not line up.
    """
    fd = {t.place_id: t for t in face_driven}
    ots = {t.place_id: t for t in on_the_spot}
    if len(fd) != len(face_driven) or len(ots) != len(on_the_spot):
        raise AlignmentError("duplicate place ids among target scores")
    if set(fd) != set(ots) or set(fd) != set(report.place_ids):
        raise AlignmentError("face-driven, on-the-spot and report place ids differ")
    labels = list(next(iter(fd.values())).labels)
    if list(next(iter(ots.values())).labels) != labels:
        raise AlignmentError("rating sets use different cluster labels")
    missing = [d for d in labels if d not in report.dimensions]
    if missing:
        raise AlignmentError(f"prediction report lacks dimensions {missing}")
    ids = list(report.place_ids)
    rows = []
    for j, dim in enumerate(labels):
        people = spearman([fd[p].values[j] for p in ids], [ots[p].values[j] for p in ids])
        alg = report.dimensions[dim]
        pr = people.rho if not math.isnan(people.rho) else -math.inf
        ar = alg.accuracy_rho if not math.isnan(alg.accuracy_rho) else -math.inf
        winner = "tie" if abs(pr - ar) <= 1e-12 or pr == ar else ("people" if pr > ar else "algorithm")
        pu, pd_ = top_signed(people_matrix, dim, k) if people_matrix is not None else ([], [])
        au, ad = top_signed(algorithm_matrix, dim, k) if algorithm_matrix is not None else ([], [])
        rows.append(ComparisonRow(dim, people.rho, people.p_value, alg.accuracy_rho, alg.accuracy_p, winner,
                                  pu, pd_, au, ad, [f for f in pu if f in au], [f for f in pd_ if f in ad]))
    return ComparisonTable(rows)
