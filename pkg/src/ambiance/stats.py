"""Spearman rank correlation with pairwise-complete deletion, and feature x ambiance matrices."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .errors import AlignmentError, LengthMismatch, TooFewSamples

MIN_N_RHO = 3
MIN_N_P = 4
MIN_PLACES = 5


@dataclass(frozen=True)
class CorrelationCell:
    rho: float
    p_value: float
    n_effective: int

    @property
    def defined(self) -> bool:
        return not math.isnan(self.rho)


def _as_float(v) -> np.ndarray:
    return np.array([math.nan if x is None else float(x) for x in v], dtype=np.float64) \
        if not isinstance(v, np.ndarray) else v.astype(np.float64)


def _p_from_rho(rho, n):
    """Two-sided p from the t approximation; NaN where rho is undefined or n < 4."""
    rho = np.asarray(rho, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        df = n - 2.0
        r2 = np.minimum(rho * rho, 1.0)
        t = np.abs(rho) * np.sqrt(df / (1.0 - r2))
        p = 2.0 * sps.t.sf(t, np.maximum(df, 1.0))
    p = np.where(r2 >= 1.0, 0.0, p)
    return np.where(np.isnan(rho) | (n < MIN_N_P), np.nan, np.clip(p, 0.0, 1.0))


def _rank_pearson(rx: np.ndarray, ry: np.ndarray) -> float:
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sxx = float((dx * dx).sum())
    syy = float((dy * dy).sum())
    if sxx <= 0.0 or syy <= 0.0:
        return math.nan
    r = float((dx * dy).sum()) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def spearman(x, y) -> CorrelationCell:
    """Spearman's rho over the pairs where both values are present.

    Ties get average ranks. rho is undefined (NaN) for fewer than 3 pairs or a
    constant vector; the p-value needs at least 4 pairs.

    Raises:
        LengthMismatch: ``x`` and ``y`` differ in length.
    """
    x = _as_float(x)
    y = _as_float(y)
    if x.shape != y.shape:
        raise LengthMismatch(f"vectors have lengths {x.size} and {y.size}")
    keep = ~(np.isnan(x) | np.isnan(y))
    n = int(keep.sum())
    if n < MIN_N_RHO:
        return CorrelationCell(math.nan, math.nan, n)
    rho = _rank_pearson(sps.rankdata(x[keep]), sps.rankdata(y[keep]))
    return CorrelationCell(rho, float(_p_from_rho(rho, n)), n)


def permutation_p(x, y, n_perm: int = 10_000, seed: int = 0) -> float:
    """Two-sided permutation p-value for Spearman's rho (audit mode, at most 10^4 shuffles)."""
    x = _as_float(x)
    y = _as_float(y)
    if x.shape != y.shape:
        raise LengthMismatch(f"vectors have lengths {x.size} and {y.size}")
    n_perm = min(int(n_perm), 10_000)
    keep = ~(np.isnan(x) | np.isnan(y))
    rx, ry = sps.rankdata(x[keep]), sps.rankdata(y[keep])
    obs = _rank_pearson(rx, ry)
    if math.isnan(obs):
        return math.nan
    rng = np.random.default_rng(seed)
    perms = np.stack([rng.permutation(ry) for _ in range(n_perm)])
    dx = rx - rx.mean()
    dy = perms - perms.mean(axis=1, keepdims=True)
    r = dy @ dx / math.sqrt(float((dx * dx).sum()) * float((dy[0] ** 2).sum()))
    hits = int((np.abs(r) >= abs(obs) - 1e-12).sum())
    return (hits + 1) / (n_perm + 1)


# ---------------------------------------------------------------- vectorised

def _centered_unit(ranks: np.ndarray):
    """Centre rank columns and scale to unit norm; constant columns become NaN."""
    d = ranks - ranks.mean(axis=0)
    ss = (d * d).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = d / np.sqrt(ss)
    u[:, ss <= 0] = np.nan
    return u


def correlate_arrays(X, Y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spearman rho, p and n for every column of ``X`` against every column of ``Y``.

    Produces the same cells as calling :func:`spearman` pairwise. Columns
    without missing values are ranked once and correlated in one matrix
    product; the rest are re-ranked on their complete pairs.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise LengthMismatch(f"{X.shape[0]} rows against {Y.shape[0]}")
    m, p_ = X.shape[1], Y.shape[1]
    rho = np.full((m, p_), np.nan)
    nn = np.zeros((m, p_), dtype=np.int64)
    xmiss = np.isnan(X)
    ymiss = np.isnan(Y)
    xfull = ~xmiss.any(axis=0)
    yfull = ~ymiss.any(axis=0)
    n_rows = X.shape[0]
    if xfull.any() and yfull.any() and n_rows >= MIN_N_RHO:
        ux = _centered_unit(sps.rankdata(X[:, xfull], axis=0))
        uy = _centered_unit(sps.rankdata(Y[:, yfull], axis=0))
        block = np.clip(ux.T @ uy, -1.0, 1.0)
        rho[np.ix_(xfull, yfull)] = block
    nn[np.ix_(xfull, yfull)] = n_rows
    for i in range(m):
        cols = np.flatnonzero(~yfull) if xfull[i] else np.arange(p_)
        if cols.size:
            _fill_partial(X[:, i], Y, cols, rho, nn, i)
    return rho, _p_from_rho(rho, nn), nn


def _fill_partial(x: np.ndarray, Y: np.ndarray, cols: np.ndarray, rho, nn, i: int) -> None:
    """Cells of row ``i`` that need their own complete-pair subset."""
    xm = ~np.isnan(x)
    ycols = Y[:, cols]
    ym = ~np.isnan(ycols)
    both = ym & xm[:, None]
    # group columns sharing the same complete-pair pattern
    patterns: dict[bytes, list[int]] = {}
    for k in range(len(cols)):
        patterns.setdefault(both[:, k].tobytes(), []).append(k)
    for key, ks in patterns.items():
        keep = both[:, ks[0]]
        n = int(keep.sum())
        idx = cols[ks]
        nn[i, idx] = n
        if n < MIN_N_RHO:
            continue
        ux = _centered_unit(sps.rankdata(x[keep])[:, None])
        uy = _centered_unit(sps.rankdata(ycols[keep][:, ks], axis=0))
        rho[i, idx] = np.clip((ux.T @ uy).ravel(), -1.0, 1.0)


# ---------------------------------------------------------------- matrices

@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    rows: tuple[str, ...]
    cols: tuple[str, ...]
    rho: np.ndarray
    p: np.ndarray
    n: np.ndarray
    alpha: float = 0.05

    @property
    def shape(self) -> tuple[int, int]:
        return self.rho.shape

    def cell(self, row: str | int, col: str | int) -> CorrelationCell:
        i = self.rows.index(row) if isinstance(row, str) else row
        j = self.cols.index(col) if isinstance(col, str) else col
        return CorrelationCell(float(self.rho[i, j]), float(self.p[i, j]), int(self.n[i, j]))

    def undefined_rows(self) -> list[str]:
        """Rows with no defined correlation at all (flagged, never an error)."""
        return [r for r, row in zip(self.rows, self.rho) if np.isnan(row).all()]

    def to_csv(self, which: str) -> str:
        grid = {"rho": self.rho, "p": self.p, "n": self.n}[which]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", *self.cols])
        for r, row in zip(self.rows, grid):
            if which == "n":
                w.writerow([r, *(str(int(v)) for v in row)])
            else:
                w.writerow([r, *("" if math.isnan(v) else repr(float(v)) for v in row)])
        return buf.getvalue()

    def save(self, directory: str | Path, prefix: str = "") -> list[Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = []
        for which in ("rho", "p", "n"):
            path = d / f"{prefix}{which}.csv"
            path.write_text(self.to_csv(which), encoding="utf-8")
            paths.append(path)
        return paths


def align_by_place(profile_ids: Sequence[str], target_ids: Sequence[str]) -> list[int]:
    """Index into the targets for every profile, in profile order.

    Raises:
        AlignmentError: duplicate ids or ids present on one side only.
    """
    for what, ids in (("profiles", profile_ids), ("targets", target_ids)):
        dup = sorted({i for i in ids if list(ids).count(i) > 1})
        if dup:
            raise AlignmentError(f"duplicate place ids in {what}: {dup}")
    a, b = set(profile_ids), set(target_ids)
    if a != b:
        raise AlignmentError(f"unmatched place ids: profiles only {sorted(a - b)}, targets only {sorted(b - a)}")
    pos = {pid: k for k, pid in enumerate(target_ids)}
    return [pos[pid] for pid in profile_ids]


def correlation_matrix(profiles, targets, alpha: float = 0.05) -> CorrelationMatrix:
    """Spearman correlation of every profile entry with every target score across places."""
    from .registry import default_registry

    order = align_by_place([p.place_id for p in profiles], [t.place_id for t in targets])
    if len(profiles) < MIN_PLACES:
        raise TooFewSamples(f"need at least {MIN_PLACES} places, got {len(profiles)}")
    X = np.stack([p.flatten() for p in profiles])
    Y = np.stack([targets[k].as_array() for k in order])
    labels = tuple(targets[0].labels)
    rho, p, n = correlate_arrays(X, Y)
    return CorrelationMatrix(tuple(default_registry().profile_labels()), labels, rho, p, n, alpha)


@dataclass(frozen=True)
class SignificantCell:
    feature: str
    ambiance: str
    rho: float
    p_value: float
    n_effective: int


def significant_cells(matrix: CorrelationMatrix, alpha: float | None = None) -> list[SignificantCell]:
    """Cells with p < alpha, strongest first; ties ordered by (feature, ambiance)."""
    alpha = matrix.alpha if alpha is None else alpha
    out = []
    with np.errstate(invalid="ignore"):
        hits = np.argwhere(matrix.p < alpha)
    for i, j in hits:
        out.append(SignificantCell(matrix.rows[i], matrix.cols[j], float(matrix.rho[i, j]),
                                   float(matrix.p[i, j]), int(matrix.n[i, j])))
    out.sort(key=lambda c: (-abs(c.rho), c.feature, c.ambiance))
    return out
