"""The 72 ambiance dimensions, rating files, cluster relabelling and target scores."""

from __future__ import annotations

import configparser
import csv
import io
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .clustering import ClusterArrangement, K_CANDIDATES, select_k
from .errors import (
    CorruptData,
    EmptyClusterAfterMove,
    MissingDimension,
    RelabelConfigError,
    SchemaMismatch,
    UnknownDimension,
)

# survey vocabulary, grouped as in the default relabel configuration
DIMENSIONS: tuple[str, ...] = (
    "trendy", "stylish", "modern", "white-collar", "impress",
    "relax", "cozy", "simple", "clean", "comfortable", "pleasant", "relaxed", "homey",
    "formal", "luxurious", "upscale", "sophisticated",
    "cheerful", "funny", "friendly",
    "drink /eat", "meet new people", "watch people", "hangout",
    "dating", "cheesy", "romantic",
    "pickup", "meat market",
    "artsy", "quirk", "imaginative", "art", "eclectic", "edgy", "unique", "hipster", "bohemian",
    "music", "energetic", "loud", "dancing", "camp",
    "attractive",
    "open", "open-minded", "adventurous", "extraverted",
    "blue-collar",
    "bland", "conservative", "old-fashion", "sterile", "stuffy", "traditional", "politically conservative",
    "off path", "strange",
    "cramp", "dark", "dingy", "creep",
    "agreeable", "emotionally stable", "concencious",
    "read", "study", "work", "web",
    "douchy", "pretentious", "self centered",
)
assert len(DIMENSIONS) == 72 and len(set(DIMENSIONS)) == 72

RATING_SETS = ("face_driven", "on_the_spot")
TARGET_MODES = ("target", "mean")


@dataclass(frozen=True)
class AmbianceRatings:
    place_id: str
    rating_set: str
    values: dict[str, float]

    def __post_init__(self):
        if self.rating_set not in RATING_SETS:
            raise SchemaMismatch(f"unknown rating set {self.rating_set!r}")
        for name, v in self.values.items():
            if not 0.0 <= v <= 1.0:
                raise SchemaMismatch(f"place {self.place_id!r}: rating {name!r}={v} outside [0, 1]")


@dataclass(frozen=True)
class TargetScores:
    place_id: str
    labels: tuple[str, ...]
    values: tuple[float, ...]

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=np.float64)


# ---------------------------------------------------------------- ratings file

def parse_ratings(text: str, dimensions: Sequence[str] = DIMENSIONS) -> list[AmbianceRatings]:
    """Read a ratings CSV.

    The first line is ``#scale,<min>,<max>``; the header row is
    ``place_id,rating_set`` followed by the dimension names. Raw values are
    mapped linearly onto [0, 1].
    """
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#scale"):
        raise SchemaMismatch("ratings file must start with a '#scale,<min>,<max>' line")
    try:
        _, lo, hi = next(csv.reader([lines[0]]))
        lo, hi = float(lo), float(hi)
    except ValueError as exc:
        raise SchemaMismatch(f"bad scale line {lines[0]!r}") from exc
    if not hi > lo:
        raise SchemaMismatch("scale max must exceed scale min")
    rows = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
    if not rows or rows[0][:2] != ["place_id", "rating_set"]:
        raise SchemaMismatch("ratings header must begin with place_id,rating_set")
    header = rows[0][2:]
    unknown = sorted(set(header) - set(dimensions))
    if unknown:
        raise UnknownDimension(f"ratings file has unknown dimensions {unknown}")
    out = []
    seen = set()
    for lineno, row in enumerate(rows[1:], start=3):
        if not row:
            continue
        if len(row) != len(rows[0]):
            raise CorruptData(f"ratings line {lineno}: expected {len(rows[0])} cells, got {len(row)}")
        key = (row[0], row[1])
        if key in seen:
            raise SchemaMismatch(f"ratings line {lineno}: duplicate row for {key}")
        seen.add(key)
        try:
            vals = {d: (float(v) - lo) / (hi - lo) for d, v in zip(header, row[2:])}
        except ValueError as exc:
            raise CorruptData(f"ratings line {lineno}: {exc}") from exc
        out.append(AmbianceRatings(row[0], row[1], vals))
    return out


def load_ratings(path: str | Path) -> list[AmbianceRatings]:
    return parse_ratings(Path(path).read_text(encoding="utf-8"))


def format_ratings(ratings: Iterable[AmbianceRatings], scale: tuple[float, float] = (0.0, 1.0),
                   dimensions: Sequence[str] = DIMENSIONS) -> str:
    lo, hi = scale
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["#scale", repr(float(lo)), repr(float(hi))])
    w.writerow(["place_id", "rating_set", *dimensions])
    for r in ratings:
        # 12 significant digits keep the scale conversion free of float noise
        w.writerow([r.place_id, r.rating_set, *(f"{lo + r.values[d] * (hi - lo):.12g}" for d in dimensions)])
    return buf.getvalue()


def rating_matrix(ratings: Sequence[AmbianceRatings], rating_set: str,
                  dimensions: Sequence[str] = DIMENSIONS) -> tuple[list[str], np.ndarray]:
    """Places x dimensions matrix for one rating set, rows sorted by place id."""
    rows = sorted((r for r in ratings if r.rating_set == rating_set), key=lambda r: r.place_id)
    missing = [d for d in dimensions if rows and d not in rows[0].values]
    if missing:
        raise MissingDimension(f"ratings lack dimensions {missing}")
    return [r.place_id for r in rows], np.array([[r.values[d] for d in dimensions] for r in rows])


def cluster_dimensions(ratings: Sequence[AmbianceRatings], rating_set: str = "face_driven",
                       candidates: Sequence[int] = K_CANDIDATES, seed: int = 0) -> ClusterArrangement:
    """Cluster the dimensions, each a point whose coordinates are its ratings across places."""
    _, M = rating_matrix(ratings, rating_set)
    return select_k(M.T, candidates, seed, names=list(DIMENSIONS))


# ---------------------------------------------------------------- relabelling

@dataclass(frozen=True)
class RelabelBlock:
    name: str
    target: str | None
    members: tuple[str, ...]


def parse_relabel(text: str) -> list[RelabelBlock]:
    """Parse INI-style cluster blocks: ``[name]`` with ``target`` and ``members`` keys."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise RelabelConfigError(f"cannot parse relabel config: {exc}") from exc
    blocks = []
    for name in cp.sections():
        sec = cp[name]
        extra = set(sec) - {"target", "members"}
        if extra:
            raise RelabelConfigError(f"block [{name}] has unknown keys {sorted(extra)}")
        target = sec.get("target", "").strip() or None
        members = tuple(m.strip() for m in sec.get("members", "").split(",") if m.strip())
        blocks.append(RelabelBlock(name, target, members))
    return blocks


def default_relabel_text() -> str:
    return resources.files("ambiance").joinpath("data/relabel.conf").read_text(encoding="utf-8")


def default_relabel() -> list[RelabelBlock]:
    return parse_relabel(default_relabel_text())


def apply_relabel(arrangement: ClusterArrangement, blocks: Sequence[RelabelBlock]) -> ClusterArrangement:
    """Move the dimensions listed in each block into that block's cluster.

    Original clusters left empty by the moves disappear; clusters untouched by
    the configuration keep their members and target term. Configured clusters
    come first, in configuration order.

    Raises:
        UnknownDimension: a block lists a dimension the arrangement lacks.
        EmptyClusterAfterMove: a block would produce a cluster with no members.
        RelabelConfigError: a dimension is listed twice.
    """
    if not blocks:
        return arrangement
    assignment = dict(arrangement.assignment)
    listed: dict[str, str] = {}
    for b in blocks:
        dims = ([b.target] if b.target else []) + list(b.members)
        if not dims:
            raise EmptyClusterAfterMove(f"cluster [{b.name}] would be empty")
        for d in dims:
            if d not in assignment:
                raise UnknownDimension(f"cluster [{b.name}] names unknown dimension {d!r}")
            if d in listed and listed[d] != b.name:
                raise RelabelConfigError(f"dimension {d!r} listed in both [{listed[d]}] and [{b.name}]")
            listed[d] = b.name
    configured = [b.name for b in blocks]
    if len(set(configured)) != len(configured):
        raise RelabelConfigError("duplicate cluster block names")
    for d, c in listed.items():
        assignment[d] = c
    targets = {}
    for b in blocks:
        targets[b.name] = b.target or next(d for d in assignment if assignment[d] == b.name)
    survivors = []
    for c in arrangement.clusters:
        if c in targets:
            continue
        members = [d for d, cc in assignment.items() if cc == c]
        if not members:
            continue
        survivors.append(c)
        t = arrangement.target_terms.get(c)
        targets[c] = t if t in members else members[0]
    clusters = tuple(configured + survivors)
    return ClusterArrangement(clusters, assignment, targets, arrangement.silhouette, dict(arrangement.scores)).validate()


def trivial_arrangement(dimensions: Sequence[str] = DIMENSIONS) -> ClusterArrangement:
    """One cluster per dimension; a neutral starting point for relabelling."""
    names = tuple(f"cluster-{i + 1}" for i in range(len(dimensions)))
    return ClusterArrangement(names, dict(zip(dimensions, names)), dict(zip(names, dimensions)))


# ---------------------------------------------------------------- target scores

def target_scores(ratings: AmbianceRatings, arrangement: ClusterArrangement, mode: str = "target") -> TargetScores:
    """One score per cluster: the target term's rating, or the mean of member ratings.

    Raises:
        MissingDimension: the ratings lack a dimension the score needs.
    """
    if mode not in TARGET_MODES:
        raise ValueError(f"target mode must be one of {TARGET_MODES}")
    vals = []
    for c in arrangement.clusters:
        needed = [arrangement.target_terms[c]] if mode == "target" else arrangement.members(c)
        missing = [d for d in needed if d not in ratings.values]
        if missing:
            raise MissingDimension(f"place {ratings.place_id!r} has no rating for {missing}")
        vals.append(float(np.mean([ratings.values[d] for d in needed])))
    return TargetScores(ratings.place_id, tuple(arrangement.clusters), tuple(vals))
