"""Per-picture feature vectors and their aggregation into 129-element place profiles.

Missing values are NaN in memory, ``null`` in JSON and an empty cell in CSV.
A NaN in a face-dependent slot of a picture without a face is *missing*; any
other NaN (for instance face focus when the face box fills the frame) is
*not applicable*.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .annotation import FaceAnnotation
from .eigenfaces import EigenfacesModel, default_model
from .errors import ManifestMismatch, WrongGroupSize
from .face import CorpusStats, extract_face, face_raster, uniqueness
from .imaging import ImageBuffer
from .registry import N_FEATURES, PROFILE_LENGTH, FeatureRegistry, default_registry
from .visual import Working, extract_visual

GROUP_SIZE = 25
MIN_PARTIAL = 5

PRESENT = "present"
MISSING = "missing"
NOT_APPLICABLE = "not_applicable"


@dataclass(frozen=True, eq=False)
class PictureFeatures:
    picture_id: str
    values: np.ndarray  # (64,), NaN where absent
    manifest_version: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).copy()
        if v.shape != (N_FEATURES,):
            raise ValueError(f"expected {N_FEATURES} values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def get(self, name: str, registry: FeatureRegistry | None = None) -> float:
        reg = registry or default_registry()
        return float(self.values[reg.index(name)])

    @property
    def shows_face(self) -> bool:
        return self.get("shows_face") == 1.0

    def status(self, name: str, registry: FeatureRegistry | None = None) -> str:
        reg = registry or default_registry()
        v = self.values[reg.index(name)]
        if not math.isnan(v):
            return PRESENT
        if reg[name].face_dependent and not self.shows_face:
            return MISSING
        return NOT_APPLICABLE

    def with_value(self, name: str, value: float) -> "PictureFeatures":
        v = self.values.copy()
        v[default_registry().index(name)] = value
        return PictureFeatures(self.picture_id, v, self.manifest_version)

    def to_json(self) -> dict:
        reg = default_registry()
        return {
            "picture_id": self.picture_id,
            "manifest_version": self.manifest_version,
            "values": {n: _json_num(x) for n, x in zip(reg.names, self.values)},
        }

    @classmethod
    def from_json(cls, d: dict) -> "PictureFeatures":
        reg = default_registry()
        vals = d["values"]
        return cls(d["picture_id"], np.array([_from_json_num(vals.get(n)) for n in reg.names]), d["manifest_version"])

    def __eq__(self, other):
        if not isinstance(other, PictureFeatures):
            return NotImplemented
        return (self.picture_id == other.picture_id and self.manifest_version == other.manifest_version
                and np.array_equal(self.values, other.values, equal_nan=True))


def _json_num(x: float):
    x = float(x)
    return None if math.isnan(x) else x


def _from_json_num(x) -> float:
    return math.nan if x is None else float(x)


def extract_picture(image: ImageBuffer, annotation: FaceAnnotation, corpus_stats: CorpusStats | None = None,
                    model: EigenfacesModel | None = None, picture_id: str = "",
                    registry: FeatureRegistry | None = None,
                    extractor_version: str | None = None) -> PictureFeatures:
    """Fill all 64 registry slots for one picture.

    Uniqueness needs corpus statistics; without them the slot stays NaN and
    can be filled later with :func:`attach_uniqueness`.

    Raises:
        ManifestMismatch: the extractor or emotion model was built under a
            different manifest version than the registry.
    """
    reg = registry or default_registry()
    version = extractor_version if extractor_version is not None else default_registry().version
    reg.check(version, "feature extractor")
    model = model or default_model()
    reg.check(model.manifest_version, "emotion model")

    feats: dict[str, float] = extract_visual(Working(image)).as_feature_dict()
    feats.update(extract_face(image, annotation, model, face_raster(image) if annotation.detected else None))
    values = np.full(N_FEATURES, np.nan)
    for name, v in feats.items():
        values[reg.index(name)] = v
    pf = PictureFeatures(picture_id, values, reg.version)
    if corpus_stats is not None:
        pf = attach_uniqueness(pf, corpus_stats)
    return pf


def visual_vector(pf: PictureFeatures, names: Sequence[str]) -> np.ndarray:
    reg = default_registry()
    return np.array([pf.values[reg.index(n)] for n in names])


def corpus_stats_of(pictures: Sequence[PictureFeatures]) -> CorpusStats:
    names = default_registry().visual_names
    return CorpusStats.from_rows(names, [visual_vector(p, names) for p in pictures])


def attach_uniqueness(pf: PictureFeatures, stats: CorpusStats) -> PictureFeatures:
    return pf.with_value("uniqueness", uniqueness(visual_vector(pf, stats.names), stats))


# ---------------------------------------------------------------- places

@dataclass(frozen=True, eq=False)
class PlaceProfile:
    place_id: str
    mean: np.ndarray
    std: np.ndarray
    face_count: int
    manifest_version: str

    def flatten(self) -> np.ndarray:
        out = np.concatenate([self.mean, self.std, [float(self.face_count)]])
        assert out.shape == (PROFILE_LENGTH,)
        return out

    def __eq__(self, other):
        if not isinstance(other, PlaceProfile):
            return NotImplemented
        return (self.place_id == other.place_id and self.face_count == other.face_count
                and self.manifest_version == other.manifest_version
                and np.array_equal(self.mean, other.mean, equal_nan=True)
                and np.array_equal(self.std, other.std, equal_nan=True))


def flatten(profile: PlaceProfile) -> np.ndarray:
    """Registry means, registry standard deviations, face count: 129 values."""
    return profile.flatten()


def unflatten(vector, place_id: str, manifest_version: str | None = None) -> PlaceProfile:
    v = np.asarray(vector, dtype=np.float64)
    if v.shape != (PROFILE_LENGTH,):
        raise ValueError(f"expected {PROFILE_LENGTH} values, got shape {v.shape}")
    return PlaceProfile(place_id, v[:N_FEATURES].copy(), v[N_FEATURES:2 * N_FEATURES].copy(), int(v[-1]),
                        manifest_version or default_registry().version)


def aggregate_place(pictures: Sequence[PictureFeatures], place_id: str = "", allow_partial: bool = False,
                    registry: FeatureRegistry | None = None) -> PlaceProfile:
    """Mean and sample standard deviation of each feature over the present values.

    Raises:
        WrongGroupSize: not exactly 25 pictures (or fewer than 5 with ``allow_partial``).
        ManifestMismatch: pictures from different manifest versions.
    """
    reg = registry or default_registry()
    n = len(pictures)
    if allow_partial:
        if n < MIN_PARTIAL:
            raise WrongGroupSize(f"place {place_id!r}: {n} pictures, partial groups need at least {MIN_PARTIAL}")
    elif n != GROUP_SIZE:
        raise WrongGroupSize(f"place {place_id!r}: expected {GROUP_SIZE} pictures, got {n}")
    versions = {p.manifest_version for p in pictures}
    if len(versions) != 1:
        raise ManifestMismatch(f"place {place_id!r} mixes manifest versions {sorted(versions)}")
    reg.check(versions.pop(), f"place {place_id!r}")
    X = np.stack([p.values for p in pictures])
    present = ~np.isnan(X)
    counts = present.sum(axis=0)
    mean = np.full(N_FEATURES, np.nan)
    ok = counts >= 1
    # shift by the first present value so identical inputs average exactly
    ref = np.nan_to_num(X[np.argmax(present, axis=0), np.arange(N_FEATURES)])
    shifted = np.where(present, X - ref, 0.0)
    mean[ok] = ref[ok] + shifted[:, ok].sum(axis=0) / counts[ok]
    std = np.full(N_FEATURES, np.nan)
    ok2 = counts >= 2
    dev = np.where(present, X - mean, 0.0)
    std[ok2] = np.sqrt((dev[:, ok2] ** 2).sum(axis=0) / (counts[ok2] - 1))
    face_col = X[:, reg.index("shows_face")]
    face_count = int(np.nansum(face_col == 1.0))
    return PlaceProfile(place_id, mean, std, face_count, reg.version)


# ---------------------------------------------------------------- persistence

def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def profiles_to_csv(profiles: Sequence[PlaceProfile]) -> str:
    reg = default_registry()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["place_id"] + reg.profile_labels())
    for p in profiles:
        w.writerow([p.place_id] + [_fmt(x) for x in p.flatten()])
    return buf.getvalue()


def profiles_from_csv(text: str) -> list[PlaceProfile]:
    reg = default_registry()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][1:] != reg.profile_labels():
        raise ManifestMismatch("profile CSV columns do not match the feature registry")
    return [unflatten([math.nan if c == "" else float(c) for c in r[1:]], r[0]) for r in rows[1:] if r]


def profiles_to_json(profiles: Sequence[PlaceProfile]) -> str:
    reg = default_registry()
    doc = {
        "manifest_version": reg.version,
        "features": reg.names,
        "places": [
            {
                "place_id": p.place_id,
                "mean": [_json_num(x) for x in p.mean],
                "std": [_json_num(x) for x in p.std],
                "face_count": p.face_count,
            }
            for p in profiles
        ],
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def profiles_from_json(text: str) -> list[PlaceProfile]:
    doc = json.loads(text)
    reg = default_registry()
    reg.check(doc["manifest_version"], "profile file")
    return [
        PlaceProfile(d["place_id"], np.array([_from_json_num(x) for x in d["mean"]]),
                     np.array([_from_json_num(x) for x in d["std"]]), int(d["face_count"]), doc["manifest_version"])
        for d in doc["places"]
    ]


def save_profiles(directory: str | Path, profiles: Sequence[PlaceProfile]) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "profiles.csv").write_text(profiles_to_csv(profiles), encoding="utf-8")
    (d / "profiles.json").write_text(profiles_to_json(profiles), encoding="utf-8")
