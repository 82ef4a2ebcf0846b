"""Seeded synthetic corpora with a known signal, for checking the statistics end to end.

Pictures are drawn directly in feature space (no rasters), aggregated with the
real place aggregation, and targets are planted as linear functions of a few
profile entries plus Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .aggregation import GROUP_SIZE, PictureFeatures, PlaceProfile, aggregate_place
from .ambiance_model import TargetScores
from .registry import default_registry

PLANTED_FEATURES = ("mean:contrast", "mean:smile", "mean:symmetry", "mean:brightness_face", "mean:color_red")
PLANTED_WEIGHTS = np.array([0.5, 0.4, 0.3, 0.2, 0.1])
SIGNAL_SD = 0.15
BASELINE = 0.5
FACTOR_LOADING = 0.8


@dataclass
class PlantedCorpus:
    profiles: list[PlaceProfile]
    targets: list[TargetScores]
    pictures: list[list[PictureFeatures]]
    planted: tuple[str, ...]
    noise: np.ndarray

    @property
    def X(self) -> np.ndarray:
        return np.stack([p.flatten() for p in self.profiles])

    @property
    def Y(self) -> np.ndarray:
        return np.stack([t.as_array() for t in self.targets])


def absence_rates(rng: np.random.Generator, n_places: int, face_absent_rate: float,
                  faceless_places: int = 0) -> np.ndarray:
    """Per-place face-absence probability with a given overall rate.

    ``faceless_places`` randomly chosen places get no faces at all and the
    rest share the remaining absence, so the expected corpus-wide rate stays
    ``face_absent_rate``. Without them a place of 25 pictures practically
    always shows some face and no place-level value goes missing.
    """
    rates = np.full(n_places, float(face_absent_rate))
    if faceless_places:
        if faceless_places > face_absent_rate * n_places:
            raise ValueError("more faceless places than the overall absence rate allows")
        gone = rng.choice(n_places, size=faceless_places, replace=False)
        rates[:] = (face_absent_rate * n_places - faceless_places) / (n_places - faceless_places)
        rates[gone] = 1.0
    return rates


def planted_pictures(rng: np.random.Generator, n_places: int, face_absent_rate: float = 0.0,
                     group_size: int = GROUP_SIZE, shared: Sequence[str] = (),
                     loading: float = FACTOR_LOADING, faceless_places: int = 0) -> list[list[PictureFeatures]]:
    """Pictures whose features vary between places (latent place level) and within them.

    Features named in ``shared`` load on one common place factor, the way
    stylistic cues of a clientele tend to move together.
    """
    reg = default_registry()
    mask = reg.face_dependent_mask
    face_idx = reg.index("shows_face")
    m = len(reg)
    common = np.array([reg.index(n) for n in shared], dtype=np.int64)
    rates = absence_rates(rng, n_places, face_absent_rate, faceless_places)
    places = []
    for p in range(n_places):
        level = rng.normal(0.0, 1.0, m)
        if common.size:
            level[common] = loading * rng.normal() + np.sqrt(1.0 - loading ** 2) * level[common]
        pics = []
        for j in range(group_size):
            vals = 0.5 + 0.12 * level + 0.08 * rng.normal(0.0, 1.0, m)
            has_face = rng.random() >= rates[p]
            vals[face_idx] = 1.0 if has_face else 0.0
            if not has_face:
                vals[mask] = np.nan
            pics.append(PictureFeatures(f"p{p:03d}-{j:02d}", vals, reg.version))
        places.append(pics)
    return places


def planted_corpus(seed: int, n_places: int = 49, noise: float | Sequence[float] = 0.03,
                   face_absent_rate: float = 0.0, labels: Sequence[str] | None = None,
                   planted: Sequence[str] = PLANTED_FEATURES, faceless_places: int = 0) -> PlantedCorpus:
    """49 places whose 18 target scores are linear in five planted profile entries.

    Every dimension uses the same five entries with the fixed unequal weights
    rotated by its index, so dimensions are distinct but equally learnable.
    ``noise`` is one standard deviation for all dimensions or one per dimension.
    """
    from .ambiance_model import default_relabel

    rng = np.random.default_rng(seed)
    labels = tuple(labels or [b.name for b in default_relabel()])
    d = len(labels)
    sig = np.broadcast_to(np.asarray(noise, dtype=np.float64), (d,)).copy()
    shared = [f.split(":", 1)[1] for f in planted if f.startswith("mean:")]
    pictures = planted_pictures(rng, n_places, face_absent_rate, shared=shared, faceless_places=faceless_places)
    profiles = [aggregate_place(pics, f"place-{i:03d}") for i, pics in enumerate(pictures)]
    X = np.stack([p.flatten() for p in profiles])
    cols = [default_registry().profile_labels().index(f) for f in planted]
    Z = X[:, cols]
    Z = (Z - np.nanmean(Z, axis=0)) / np.nanstd(Z, axis=0)
    Z = np.nan_to_num(Z)
    Y = np.empty((n_places, d))
    for k in range(d):
        w = np.roll(PLANTED_WEIGHTS, k)
        Y[:, k] = BASELINE + SIGNAL_SD * (Z @ w) / np.linalg.norm(w) + rng.normal(0.0, sig[k], n_places)
    Y = np.clip(Y, 0.0, 1.0)
    targets = [TargetScores(p.place_id, labels, tuple(float(v) for v in row)) for p, row in zip(profiles, Y)]
    return PlantedCorpus(profiles, targets, pictures, tuple(planted), sig)


def null_corpus(seed: int, n_places: int = 49, n_features: int = 129, n_dims: int = 18):
    """Independent random profiles and targets (no signal at all)."""
    rng = np.random.default_rng(seed)
    return rng.random((n_places, n_features)), rng.random((n_places, n_dims))
