"""Seeded demo dataset: places of synthetic profile pictures with exact annotations and ratings.

Each place has latent ambiance traits. The traits steer what its visitors'
pictures look like (smiles, glasses, palette, framing) and, with noise, both
rating sets, so the full pipeline has real structure to find.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .ambiance_model import DIMENSIONS, AmbianceRatings, default_relabel, format_ratings
from .annotation import FaceAnnotation, write_annotation_file
from .imaging import ImageBuffer, Region, encode_png
from .planted import absence_rates
from .synthetic import disk_mask, draw_face

SCALE = (1.0, 5.0)
FACE_ABSENT_RATE = 0.47


def _background(rng: np.random.Generator, size: int, hue_bias: float, busy: float) -> np.ndarray:
    base = np.array([rng.uniform(20, 235) for _ in range(3)])
    # pull the palette toward the place's hue preference
    tint = np.array([math.cos(hue_bias), math.cos(hue_bias - 2.1), math.cos(hue_bias + 2.1)])
    base = np.clip(base + 60 * tint, 0, 255)
    px = np.empty((size, size, 3))
    px[...] = base
    for _ in range(int(busy * 6)):
        c = np.clip(base + rng.normal(0, 70, 3), 0, 255)
        cx, cy, r = rng.uniform(0, size, 2).tolist() + [rng.uniform(3, size / 4)]
        px[disk_mask(size, size, cx, cy, r)] = c
    return px


def _no_face_picture(rng: np.random.Generator, size: int, traits: dict) -> np.ndarray:
    px = _background(rng, size, traits["hue"], 1.0 + 2.0 * traits["busy"])
    if rng.random() < 0.5:
        # landscape-like split
        horizon = int(rng.uniform(0.3, 0.7) * size)
        px[horizon:] = np.clip(px[horizon:] * rng.uniform(0.4, 0.9), 0, 255)
    return np.clip(np.rint(px), 0, 255).astype(np.uint8)


def _face_picture(rng: np.random.Generator, size: int, traits: dict):
    px = _background(rng, size, traits["hue"], traits["busy"])
    face_w = size * rng.uniform(0.3, 0.3 + 0.35 * traits["close"])
    margin = face_w * 0.7
    cx = rng.uniform(margin, size - margin) if traits["offcenter"] > rng.random() else size / 2 + rng.normal(0, 2)
    cy = size / 2 + rng.normal(0, 2)
    tilt = rng.normal(0, 4 + 12 * traits["tilt"])
    smile = rng.random() < traits["smile"]
    u = rng.random()
    glasses = "reading" if u < traits["glasses"] else ("sunglasses" if u < traits["glasses"] + traits["sun"] else "none")
    skin = tuple(int(v) for v in np.clip(np.array([224, 180, 150]) * rng.uniform(0.55, 1.1), 0, 255))
    arr = np.clip(np.rint(px), 0, 255).astype(np.uint8)
    g = draw_face(arr, cx, cy, face_w, tilt, skin=skin, smile=smile, glasses=glasses)
    x0, y0, x1, y1 = g["bbox"]
    bbox = Region(max(0, x0), max(0, y0), min(size, x1), min(size, y1))
    race = rng.dirichlet(traits["race"])
    ann = FaceAnnotation(
        detected=True,
        bbox=bbox,
        landmarks={k: (float(g[k][0]), float(g[k][1])) for k in ("left_eye", "right_eye", "nose", "mouth")},
        smile=float(np.clip(rng.normal(0.8 if smile else 0.2, 0.1), 0, 1)),
        age=float(np.round(np.clip(rng.normal(22 + 30 * traits["age"], 6), 16, 80), 1)),
        sex="female" if rng.random() < traits["female"] else "male",
        sex_confidence=float(rng.uniform(0.7, 1.0)),
        race=(float(race[0]), float(race[1]), float(1.0 - race[0] - race[1])),
        glasses=glasses,
        tilt_deg=float(tilt),
    )
    return arr, ann.validate()


def _place_traits(rng: np.random.Generator) -> tuple[dict, np.ndarray]:
    latent = rng.uniform(0, 1, 6)
    traits = {
        "smile": 0.2 + 0.6 * latent[0],
        "glasses": 0.05 + 0.35 * latent[1],
        "sun": 0.05 + 0.2 * latent[2],
        "hue": 2 * math.pi * latent[3],
        "busy": latent[4],
        "close": latent[5],
        "offcenter": rng.uniform(0, 0.6),
        "tilt": rng.uniform(0, 1),
        "age": latent[1],
        "female": rng.uniform(0.3, 0.7),
        "race": rng.uniform(0.5, 3.0, 3),
    }
    return traits, latent


def _ratings(rng: np.random.Generator, latent: np.ndarray, loadings: np.ndarray, cluster_of: np.ndarray,
             noise: float) -> dict[str, float]:
    # one score per cluster from the latent traits, then per-dimension noise
    cluster_scores = 1.0 / (1.0 + np.exp(-(loadings @ (latent - 0.5)) * 3.0))
    vals = np.clip(cluster_scores[cluster_of] + rng.normal(0, noise, len(DIMENSIONS)), 0.0, 1.0)
    return {d: float(np.round(v, 4)) for d, v in zip(DIMENSIONS, vals)}


def make_demo_dataset(root: str | Path, n_places: int = 14, pictures_per_place: int = 25, size: int = 72,
                      seed: int = 0, face_absent_rate: float = FACE_ABSENT_RATE,
                      faceless_places: int | None = None) -> Path:
    """Write ``places/<id>/pics/*.png``, ``annotations.jsonl`` and ``ratings.csv`` under ``root``.

    By default one place in six has no visible faces at all, so face-dependent
    profile entries go missing for some places.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    blocks = default_relabel()
    cluster_index = {}
    for ci, b in enumerate(blocks):
        for d in (b.target, *b.members):
            cluster_index[d] = ci
    cluster_of = np.array([cluster_index[d] for d in DIMENSIONS])
    loadings = rng.normal(0, 1, (len(blocks), 6))
    faceless = n_places // 6 if faceless_places is None else faceless_places
    rates = absence_rates(rng, n_places, face_absent_rate, faceless)
    annotations: dict[str, FaceAnnotation] = {}
    ratings = []
    for p in range(n_places):
        place_id = f"place-{p:02d}"
        traits, latent = _place_traits(rng)
        pics = root / "places" / place_id / "pics"
        pics.mkdir(parents=True, exist_ok=True)
        for j in range(pictures_per_place):
            stem = f"pic-{j:02d}"
            if rng.random() < rates[p]:
                arr, ann = _no_face_picture(rng, size, traits), FaceAnnotation(False)
            else:
                arr, ann = _face_picture(rng, size, traits)
            (pics / f"{stem}.png").write_bytes(encode_png(ImageBuffer(arr)))
            annotations[f"{place_id}/{stem}"] = ann
        ratings.append(AmbianceRatings(place_id, "on_the_spot", _ratings(rng, latent, loadings, cluster_of, 0.05)))
        ratings.append(AmbianceRatings(place_id, "face_driven", _ratings(rng, latent, loadings, cluster_of, 0.12)))
    write_annotation_file(root / "annotations.jsonl", annotations)
    (root / "ratings.csv").write_text(format_ratings(ratings, SCALE), encoding="utf-8")
    return root
