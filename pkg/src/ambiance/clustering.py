"""k-means (k-means++ seeding, Lloyd iterations) and silhouette-based choice of k.

Euclidean distance throughout, for both clustering and silhouette.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import SingleCluster, TooFewPoints

MAX_ITER = 300
RESTARTS = 10
K_CANDIDATES = (5, 10, 15, 20, 25, 30)


@dataclass(frozen=True, eq=False)
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    inertia_history: tuple[float, ...] = ()


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return cdist(points, centroids, "sqeuclidean")


def _plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centers = [int(rng.integers(n))]
    d2 = _sq_dists(points, points[centers]).ravel()
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            raise TooFewPoints(f"cannot seed {k} clusters: fewer than {k} distinct points")
        nxt = int(rng.choice(n, p=d2 / total))
        centers.append(nxt)
        d2 = np.minimum(d2, _sq_dists(points, points[[nxt]]).ravel())
    return points[centers].copy()


def _repair_empty(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray, k: int) -> np.ndarray:
    """Give every empty cluster the point of the largest cluster farthest from its centre."""
    labels = labels.copy()
    for j in range(k):
        if np.any(labels == j):
            continue
        sizes = np.bincount(labels, minlength=k)
        big = int(np.argmax(sizes))
        members = np.flatnonzero(labels == big)
        d = ((points[members] - centroids[big]) ** 2).sum(axis=1)
        labels[members[int(np.argmax(d))]] = j
    return labels


def kmeans(points, k: int, seed: int | np.random.SeedSequence = 0, max_iter: int = MAX_ITER) -> KMeansResult:
    """Lloyd's algorithm from k-means++ seeds, deterministic for a given seed.

    Iterates until the assignment stops changing or ``max_iter`` is reached.

    Raises:
        TooFewPoints: ``k`` exceeds the number of distinct points.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("points must be a 2-D array")
    if k < 1:
        raise ValueError("k must be positive")
    n_distinct = len(np.unique(X, axis=0)) if len(X) else 0
    if k > n_distinct:
        raise TooFewPoints(f"k={k} exceeds the {n_distinct} distinct points")
    rng = np.random.default_rng(seed)
    centroids = _plusplus(X, k, rng)
    labels = np.argmin(_sq_dists(X, centroids), axis=1)
    labels = _repair_empty(X, labels, centroids, k)
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        centroids = np.stack([X[labels == j].mean(axis=0) for j in range(k)])
        history.append(float(((X - centroids[labels]) ** 2).sum()))
        new = np.argmin(_sq_dists(X, centroids), axis=1)
        new = _repair_empty(X, new, centroids, k)
        if np.array_equal(new, labels):
            break
        labels = new
    centroids = np.stack([X[labels == j].mean(axis=0) for j in range(k)])
    inertia = float(((X - centroids[labels]) ** 2).sum())
    return KMeansResult(labels, centroids, inertia, it, tuple(history))


def silhouette_samples(points, labels) -> np.ndarray:
    """Per-point silhouette; members of singleton clusters score 0.

    Raises:
        SingleCluster: fewer than two clusters.
    """
    X = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    uniq, inv = np.unique(labels, return_inverse=True)
    if len(uniq) < 2:
        raise SingleCluster("silhouette needs at least two clusters")
    D = cdist(X, X)
    onehot = np.zeros((len(X), len(uniq)))
    onehot[np.arange(len(X)), inv] = 1.0
    sizes = onehot.sum(axis=0)
    sums = D @ onehot  # distance from each point to every cluster, summed
    own = sizes[inv]
    a = np.where(own > 1, sums[np.arange(len(X)), inv] / np.maximum(own - 1, 1), 0.0)
    other = sums / sizes
    other[np.arange(len(X)), inv] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return np.where(own > 1, s, 0.0)


def silhouette(points, labels) -> float:
    """Mean silhouette in [-1, 1]."""
    return float(silhouette_samples(points, labels).mean())


def best_of_restarts(points, k: int, seed: int = 0, restarts: int = RESTARTS) -> KMeansResult:
    """Lowest-inertia run over seeded restarts; earlier restart wins a tie."""
    best = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        res = kmeans(points, k, child)
        if best is None or res.inertia < best.inertia:
            best = res
    return best


@dataclass(frozen=True)
class ClusterArrangement:
    """Assignment of named points (ambiance dimensions) to named clusters."""

    clusters: tuple[str, ...]
    assignment: dict[str, str]
    target_terms: dict[str, str]
    silhouette: float = float("nan")
    scores: dict[int, float] = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.clusters)

    def members(self, cluster: str) -> list[str]:
        return [d for d, c in self.assignment.items() if c == cluster]

    def validate(self) -> "ClusterArrangement":
        for c in self.clusters:
            t = self.target_terms.get(c)
            if t is None or self.assignment.get(t) != c:
                raise ValueError(f"target term {t!r} of cluster {c!r} is not one of its members")
        if set(self.assignment.values()) - set(self.clusters):
            raise ValueError("assignment refers to undeclared clusters")
        return self

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "silhouette": None if np.isnan(self.silhouette) else self.silhouette,
            "silhouette_by_k": {str(k): v for k, v in sorted(self.scores.items())},
            "clusters": [
                {"name": c, "target": self.target_terms[c], "members": self.members(c)} for c in self.clusters
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "ClusterArrangement":
        clusters = tuple(c["name"] for c in d["clusters"])
        assignment = {m: c["name"] for c in d["clusters"] for m in c["members"]}
        targets = {c["name"]: c["target"] for c in d["clusters"]}
        sil = d.get("silhouette")
        return cls(clusters, assignment, targets, float("nan") if sil is None else float(sil),
                   {int(k): float(v) for k, v in d.get("silhouette_by_k", {}).items()})


def arrangement_from_labels(names: Sequence[str], points, result: KMeansResult, sil: float,
                            scores: dict[int, float] | None = None) -> ClusterArrangement:
    """Name clusters ``cluster-1..k`` in order of first appearance; target = member nearest its centroid."""
    X = np.asarray(points, dtype=np.float64)
    order: list[int] = []
    for lab in result.labels:
        if int(lab) not in order:
            order.append(int(lab))
    cname = {lab: f"cluster-{i + 1}" for i, lab in enumerate(order)}
    assignment = {n: cname[int(lab)] for n, lab in zip(names, result.labels)}
    targets = {}
    for lab in order:
        idx = np.flatnonzero(result.labels == lab)
        d = ((X[idx] - result.centroids[lab]) ** 2).sum(axis=1)
        targets[cname[lab]] = names[int(idx[int(np.argmin(d))])]
    return ClusterArrangement(tuple(cname[lab] for lab in order), assignment, targets, sil, dict(scores or {}))


def select_k(points, candidates: Sequence[int] = K_CANDIDATES, seed: int = 0,
             names: Sequence[str] | None = None, restarts: int = RESTARTS) -> ClusterArrangement:
    """Cluster for every candidate k and keep the best mean silhouette.

    Ties go to the smaller k.
    """
    X = np.asarray(points, dtype=np.float64)
    if not candidates:
        raise ValueError("no candidate k values")
    names = list(names) if names is not None else [f"p{i}" for i in range(len(X))]
    scores: dict[int, float] = {}
    results: dict[int, KMeansResult] = {}
    for k in sorted(set(candidates)):
        res = best_of_restarts(X, k, seed, restarts)
        results[k] = res
        scores[k] = silhouette(X, res.labels)
    best_k = min(scores, key=lambda k: (-scores[k], k))
    return arrangement_from_labels(names, X, results[best_k], scores[best_k], scores)
