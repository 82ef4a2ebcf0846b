"""Eigenfaces emotion classifier: PCA over aligned 32x32 crops, nearest centroid, softmax.

Crops are grayscale float arrays in [0, 1]. Each crop is mean-centred on its
own before anything else, so adding a constant intensity never changes the
output.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import DegenerateCovariance, InsufficientData, ModelMismatch
from .imaging import ImageBuffer, load_image, luminance_array
from .registry import constants, default_registry

EMOTIONS = ("anger", "disgust", "happy", "neutral", "sad")

# canonical eye placement inside the crop, as fractions of the crop side
EYE_ROW = 0.31
EYE_LEFT_COL = 0.3
EYE_RIGHT_COL = 0.7


@dataclass(frozen=True, eq=False)
class EigenfacesModel:
    mean_face: np.ndarray  # (size*size,)
    basis: np.ndarray  # (k, size*size), orthonormal rows
    class_centroids: np.ndarray  # (n_classes, k)
    softmax_temperature: float
    labels: tuple[str, ...] = EMOTIONS
    crop_size: int = 32
    manifest_version: str = "1.0"

    @property
    def k(self) -> int:
        return self.basis.shape[0]

    def project(self, crop: np.ndarray) -> np.ndarray:
        x = _prepare(crop, self.crop_size)
        return self.basis @ (x - self.mean_face)

    def save(self, path: str | Path) -> None:
        np.savez(
            path,
            mean_face=self.mean_face,
            basis=self.basis,
            class_centroids=self.class_centroids,
            softmax_temperature=np.float64(self.softmax_temperature),
            labels=np.array(self.labels),
            crop_size=np.int64(self.crop_size),
            manifest_version=np.array(self.manifest_version),
            k=np.int64(self.k),
        )

    @classmethod
    def load(cls, path: str | Path, expected_version: str | None = None) -> "EigenfacesModel":
        with np.load(path, allow_pickle=False) as data:
            version = str(data["manifest_version"])
            expected = expected_version or default_registry().version
            if version != expected:
                raise ModelMismatch(f"model trained under manifest {version!r}, expected {expected!r}")
            model = cls(
                mean_face=data["mean_face"],
                basis=data["basis"],
                class_centroids=data["class_centroids"],
                softmax_temperature=float(data["softmax_temperature"]),
                labels=tuple(str(s) for s in data["labels"]),
                crop_size=int(data["crop_size"]),
                manifest_version=version,
            )
            if model.k != int(data["k"]):
                raise ModelMismatch("stored k disagrees with basis shape")
        return model


def _prepare(crop: np.ndarray, size: int) -> np.ndarray:
    crop = np.asarray(crop, dtype=np.float64)
    if crop.shape != (size, size):
        raise ModelMismatch(f"crop must be {size}x{size}, got {crop.shape}")
    x = crop.ravel()
    return x - x.mean()


def train_eigenfaces(labeled_crops: Sequence[tuple[np.ndarray, str]], max_components: int | None = None,
                     labels: tuple[str, ...] = EMOTIONS) -> EigenfacesModel:
    """Fit the PCA basis and per-class centroids.

    Args:
        labeled_crops: ``(crop, label)`` pairs; crops are aligned square grayscale arrays.
        max_components: cap on the basis size (manifest default 40).

    Raises:
        InsufficientData: a label has fewer than two examples.
        DegenerateCovariance: the crops carry no variance after centring.
    """
    if max_components is None:
        max_components = int(constants()["max_components"])
    if not labeled_crops:
        raise InsufficientData("no training crops")
    size = int(np.asarray(labeled_crops[0][0]).shape[0])
    counts = {lab: 0 for lab in labels}
    for _, lab in labeled_crops:
        if lab not in counts:
            raise InsufficientData(f"unknown emotion label {lab!r}")
        counts[lab] += 1
    short = [lab for lab, n in counts.items() if n < 2]
    if short:
        raise InsufficientData(f"need at least 2 crops per class; short: {short}")

    X = np.stack([_prepare(c, size) for c, _ in labeled_crops])
    y = np.array([labels.index(lab) for _, lab in labeled_crops])
    mean_face = X.mean(axis=0)
    Xc = X - mean_face
    _, sv, vt = np.linalg.svd(Xc, full_matrices=False)
    tol = sv.max(initial=0.0) * max(Xc.shape) * np.finfo(float).eps
    rank = int((sv > tol).sum()) if sv.size and sv.max() > 1e-12 else 0
    if rank == 0:
        raise DegenerateCovariance("all training crops are identical after centring")
    k = min(max_components, rank)
    basis = vt[:k]
    Z = Xc @ basis.T
    centroids = np.stack([Z[y == i].mean(axis=0) for i in range(len(labels))])
    own = np.linalg.norm(Z - centroids[y], axis=1)
    temperature = float(own.mean())
    if not temperature > 0:
        temperature = 1.0
    return EigenfacesModel(mean_face, basis, centroids, temperature, tuple(labels), size,
                           default_registry().version)


def classify_emotion(crop: np.ndarray, model: EigenfacesModel) -> np.ndarray:
    """Probabilities over ``model.labels``: softmax of negative centroid distances."""
    z = model.project(crop)
    d = np.linalg.norm(model.class_centroids - z, axis=1)
    logits = -d / model.softmax_temperature
    logits -= logits.max()
    p = np.exp(logits)
    return p / p.sum()


# ---------------------------------------------------------------- alignment

def align_crop(lum: np.ndarray, left_eye: tuple[float, float], right_eye: tuple[float, float],
               size: int = 32) -> np.ndarray:
    """Similarity-warp a luminance raster so the eyes land at canonical crop positions.

    The eye line becomes horizontal and the inter-ocular distance fixed.
    Heavy downscaling is preceded by a Gaussian prefilter to avoid aliasing.
    """
    (lx, ly), (rx, ry) = left_eye, right_eye
    src_d = math.hypot(rx - lx, ry - ly)
    dst_d = (EYE_RIGHT_COL - EYE_LEFT_COL) * size
    if src_d < 1e-6:
        src_d = dst_d
    scale = src_d / dst_d
    theta = math.atan2(ry - ly, rx - lx)
    cos, sin = math.cos(theta), math.sin(theta)
    src = np.asarray(lum, dtype=np.float64)
    if scale > 1.0:
        src = ndimage.gaussian_filter(src, 0.5 * (scale - 1.0))
    vv, uu = np.mgrid[0:size, 0:size].astype(np.float64)
    du = uu - (EYE_LEFT_COL + EYE_RIGHT_COL) / 2.0 * size + 0.5
    dv = vv - EYE_ROW * size + 0.5
    mx, my = (lx + rx) / 2.0, (ly + ry) / 2.0
    xs = mx + scale * (cos * du - sin * dv)
    ys = my + scale * (sin * du + cos * dv)
    return ndimage.map_coordinates(src, [ys, xs], order=1, mode="nearest")


# ---------------------------------------------------------------- synthetic corpus

def _expression_face(rng: np.random.Generator, label: str, canvas: int = 96):
    """Render one face with a class-specific expression; returns (luminance, eyes)."""
    from .synthetic import ellipse_mask, face_geometry

    cx = canvas / 2.0 + rng.uniform(-3, 3)
    cy = canvas / 2.0 + rng.uniform(-3, 3)
    face_w = canvas * rng.uniform(0.5, 0.6)
    tilt = rng.uniform(-8, 8)
    g = face_geometry(canvas, canvas, cx, cy, face_w, tilt)
    rx, ry = g["rx"], g["ry"]
    a = math.radians(tilt)

    def at(dx, dy):
        return (cx + dx * math.cos(a) - dy * math.sin(a), cy + dx * math.sin(a) + dy * math.cos(a))

    # strokes are (xs, ys, half-width) polylines stamped in one vectorised pass
    bg = rng.uniform(0.05, 0.35)
    skin = rng.uniform(0.65, 0.85)
    lum = np.full((canvas, canvas), bg)
    lum[ellipse_mask(canvas, canvas, cx, cy, rx, ry, tilt)] = skin
    dark = skin - rng.uniform(0.45, 0.55)

    strokes = []
    eye_w, eye_h = rx * 0.13, rx * 0.13
    if label in ("anger", "disgust"):
        eye_h *= 0.45  # narrowed eyes
    for side in (-1, 1):
        ex, ey = at(side * 0.38 * rx, -0.22 * ry)
        lum[ellipse_mask(canvas, canvas, ex, ey, eye_w, eye_h, tilt)] = dark
        # eyebrows: inner end lowered for anger, raised for sadness
        inner = {"anger": 0.12, "sad": -0.12, "disgust": 0.05}.get(label, 0.0) * ry
        t = np.linspace(0.0, 1.0, 24)
        strokes.append(at(side * (0.2 + 0.35 * t) * rx, -0.38 * ry + inner * (1.0 - t)) + (1.2,))

    mouth_w = rx * (0.55 if label == "happy" else 0.38)
    curve = {"happy": 0.16, "sad": -0.14}.get(label, 0.0) * ry
    slant = 0.1 * ry if label == "disgust" else 0.0
    thick = 2.2 if label == "anger" else 1.2
    t = np.linspace(-1.0, 1.0, 40)
    strokes.append(at(t * mouth_w, 0.5 * ry - curve * t * t + curve * 0.5 - slant * t) + (thick,))
    yy, xx = np.mgrid[0:canvas, 0:canvas]
    for xs, ys, width in strokes:
        d2 = (xx[..., None] - xs) ** 2 + (yy[..., None] - ys) ** 2
        lum[(d2 <= width * width).any(axis=-1)] = dark
    lum += rng.normal(0.0, 0.02, lum.shape)
    return np.clip(lum, 0.0, 1.0), at(-0.38 * rx, -0.22 * ry), at(0.38 * rx, -0.22 * ry)


def synthetic_emotion_corpus(per_class: int = 20, seed: int = 0, size: int = 32) -> list[tuple[np.ndarray, str]]:
    """Aligned crops of rendered faces whose expression encodes the label."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(per_class):
        for label in EMOTIONS:
            lum, le, re = _expression_face(rng, label)
            # the aligner sees slightly noisy landmarks, as a provider would report
            jitter = rng.normal(0.0, 0.5, 4)
            crop = align_crop(lum, (le[0] + jitter[0], le[1] + jitter[1]), (re[0] + jitter[2], re[1] + jitter[3]), size)
            out.append((crop, label))
    return out


@lru_cache(maxsize=1)
def default_model() -> EigenfacesModel:
    """Model trained on the bundled synthetic corpus (deterministic)."""
    return train_eigenfaces(synthetic_emotion_corpus(per_class=30, seed=2024))


def load_training_corpus(directory: str | Path, label_file: str = "labels.csv") -> list[tuple[np.ndarray, str]]:
    """Read a directory of PNG crops plus a ``filename,label`` CSV."""
    directory = Path(directory)
    text = (directory / label_file).read_text(encoding="utf-8")
    out = []
    for row in csv.reader(io.StringIO(text)):
        if not row or row[0].strip().lower() == "filename":
            continue
        name, label = row[0].strip(), row[1].strip()
        img = load_image(directory / name)
        out.append((luminance_array(img.pixels), label))
    return out


def crop_from_image(image: ImageBuffer, left_eye, right_eye, size: int = 32) -> np.ndarray:
    return align_crop(image.luminance(), left_eye, right_eye, size)
