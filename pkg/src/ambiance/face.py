"""Face-dependent features, computed from the image plus a provider annotation.

Annotation coordinates are in source pixels. Extractors sample a raster that
is box-downsampled by a power of two when the image exceeds the working size
but never upsampled, so landmark windows cover a fixed number of source pixels
on ordinary profile pictures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .annotation import FaceAnnotation
from .eigenfaces import EigenfacesModel, align_crop, classify_emotion, default_model
from .errors import DegenerateCorpus, NoFace
from .imaging import ImageBuffer, Region
from .registry import constants
from .synthetic import ellipse_mask
from .visual import Working, laplacian_energy

NAN = float("nan")
REGIONS = ("eyes", "nose", "mouth", "face")


def _need_face(annotation: FaceAnnotation) -> None:
    if not annotation.detected:
        raise NoFace("no face detected in this picture")


def face_raster(image: ImageBuffer) -> Working:
    return Working(image, upsample=False)


def _as_working(image) -> Working:
    return image if isinstance(image, Working) else face_raster(image)


def _window_masks(w: Working, annotation: FaceAnnotation) -> dict[str, np.ndarray]:
    """Boolean masks over the working raster for eyes, nose, mouth and face oval."""
    h, wd = w.lum.shape
    s = w.scale
    size = int(w.c["landmark_window"])
    lm = annotation.landmarks

    def window(name):
        x, y = lm[name]
        r = Region.around(x * s, y * s, size).clamp(wd, h)
        m = np.zeros((h, wd), dtype=bool)
        m[r.slices()] = True
        return m

    b = annotation.bbox
    oval = ellipse_mask(wd, h, (b.x0 + b.x1) / 2.0 * s - 0.5, (b.y0 + b.y1) / 2.0 * s - 0.5,
                        max(b.width * s / 2.0, 0.5), max(b.height * s / 2.0, 0.5))
    if not oval.any():
        oval[Region(int(b.x0 * s), int(b.y0 * s), int(b.x1 * s), int(b.y1 * s)).clamp(wd, h).slices()] = True
    return {
        "eyes": window("left_eye") | window("right_eye"),
        "nose": window("nose"),
        "mouth": window("mouth"),
        "face": oval,
    }


def landmark_sharpness(image: ImageBuffer | Working, annotation: FaceAnnotation) -> tuple[float, float, float]:
    """Sharpness around eyes, nose and mouth, each ``s/(s+c)`` of local Laplacian energy."""
    _need_face(annotation)
    w = _as_working(image)
    energy = laplacian_energy(w.lum)
    masks = _window_masks(w, annotation)
    c = float(w.c["shake_c"])
    out = []
    for name in ("eyes", "nose", "mouth"):
        s = float(energy[masks[name]].mean())
        out.append(s / (s + c))
    return tuple(out)


def face_focus(image: ImageBuffer | Working, annotation: FaceAnnotation) -> float:
    """Gradient energy inside the face box over gradient energy outside it.

    Returns NaN (not applicable) when the box covers the whole image.
    """
    _need_face(annotation)
    w = _as_working(image)
    h, wd = w.lum.shape
    s = w.scale
    b = annotation.bbox
    box = Region(math.floor(b.x0 * s), math.floor(b.y0 * s), math.ceil(b.x1 * s), math.ceil(b.y1 * s)).clamp(wd, h)
    inside = np.zeros((h, wd), dtype=bool)
    inside[box.slices()] = True
    if inside.all():
        return NAN
    mag = w.gradient[2]
    energy = mag * mag
    return float(energy[inside].mean() / (energy[~inside].mean() + float(w.c["face_focus_eps"])))


def region_brightness_saturation(image: ImageBuffer | Working, annotation: FaceAnnotation) -> dict[str, float]:
    """Mean luminance (brightness), mean HSV value (lighting) and mean saturation per region."""
    _need_face(annotation)
    w = _as_working(image)
    masks = _window_masks(w, annotation)
    out = {}
    for region in REGIONS:
        m = masks[region]
        out[f"brightness_{region}"] = float(w.lum[m].mean())
        out[f"lighting_{region}"] = float(w.hsv[..., 2][m].mean())
        out[f"saturation_{region}"] = float(w.hsv[..., 1][m].mean())
    return out


@dataclass(frozen=True)
class HueEstimate:
    hue: float
    low_confidence: bool


def circular_hue(hues_deg: np.ndarray, weights: np.ndarray) -> HueEstimate:
    """Weighted circular mean in degrees; achromatic input gives hue 0, low confidence."""
    wsum = float(weights.sum())
    if wsum <= 1e-12:
        return HueEstimate(0.0, True)
    rad = np.radians(hues_deg)
    c = float((weights * np.cos(rad)).sum())
    s = float((weights * np.sin(rad)).sum())
    # resultant shorter than 1% of total weight: the hues cancel out
    if math.hypot(c, s) <= 1e-2 * wsum:
        return HueEstimate(0.0, True)
    hue = math.degrees(math.atan2(s, c)) % 360.0
    if hue >= 360.0 - 1e-9:
        hue = 0.0
    return HueEstimate(hue, False)


def landmark_hues(image: ImageBuffer | Working, annotation: FaceAnnotation) -> dict[str, HueEstimate]:
    """Saturation-weighted circular mean hue per region."""
    _need_face(annotation)
    w = _as_working(image)
    masks = _window_masks(w, annotation)
    return {r: circular_hue(w.hsv[..., 0][masks[r]], w.hsv[..., 1][masks[r]]) for r in REGIONS}


def self_presentation(image: ImageBuffer, annotation: FaceAnnotation) -> dict[str, float]:
    """Framing features; everything but ``shows_face`` is NaN without a face."""
    keys = ("face_centrality", "tilted", "close_up", "face_area", "glasses_reading", "glasses_sun")
    if not annotation.detected:
        return {"shows_face": 0.0, **{k: NAN for k in keys}}
    c = constants()
    b = annotation.bbox
    W, H = image.width, image.height
    bx, by = b.center
    half_diag = math.hypot(W, H) / 2.0
    dist = math.hypot(bx - W / 2.0, by - H / 2.0)
    clipped = b.clamp(W, H) if (b.x1 > 0 and b.y1 > 0 and b.x0 < W and b.y0 < H) else None
    area = (clipped.area if clipped else 0) / float(W * H)
    return {
        "shows_face": 1.0,
        "face_centrality": max(0.0, 1.0 - dist / half_diag),
        "tilted": float(abs(annotation.tilt_deg) > float(c["tilt_threshold_deg"])),
        "close_up": float(area >= float(c["close_up_fraction"])),
        "face_area": min(1.0, area),
        "glasses_reading": float(annotation.glasses == "reading"),
        "glasses_sun": float(annotation.glasses == "sunglasses"),
    }


def emotion_probabilities(image: ImageBuffer | Working, annotation: FaceAnnotation,
                          model: EigenfacesModel | None = None) -> np.ndarray:
    _need_face(annotation)
    model = model or default_model()
    w = _as_working(image)
    s = w.scale
    (lx, ly), (rx, ry) = annotation.landmarks["left_eye"], annotation.landmarks["right_eye"]
    crop = align_crop(w.lum, (lx * s, ly * s), (rx * s, ry * s), model.crop_size)
    return classify_emotion(crop, model)


def extract_face(image: ImageBuffer, annotation: FaceAnnotation, model: EigenfacesModel | None = None,
                 working: Working | None = None) -> dict[str, float]:
    """All face-dependent registry features plus ``shows_face``; NaN where undefined."""
    out = self_presentation(image, annotation)
    if not annotation.detected:
        return out
    w = working or face_raster(image)
    se, sn, sm = landmark_sharpness(w, annotation)
    out.update(sharpness_eyes=se, sharpness_nose=sn, sharpness_mouth=sm)
    out["face_focus"] = face_focus(w, annotation)
    out.update(region_brightness_saturation(w, annotation))
    for region, est in landmark_hues(w, annotation).items():
        out[f"hue_{region}"] = est.hue
    model = model or default_model()
    probs = emotion_probabilities(w, annotation, model)
    for label, p in zip(model.labels, probs):
        out[f"emotion_{label}"] = float(p)
    out["smile"] = float(annotation.smile)
    out["age"] = float(annotation.age)
    out["sex_female"] = float(annotation.sex == "female")
    out["race_caucasian"], out["race_black"], out["race_asian"] = (float(p) for p in annotation.race)
    return out


# ---------------------------------------------------------------- uniqueness

@dataclass(frozen=True)
class CorpusStats:
    names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    count: int

    @classmethod
    def from_rows(cls, names, rows) -> "CorpusStats":
        X = np.asarray(rows, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 2:
            raise DegenerateCorpus("corpus statistics need at least 2 pictures")
        return cls(tuple(names), X.mean(axis=0), X.std(axis=0, ddof=1), X.shape[0])

    def to_json(self) -> dict:
        return {"names": list(self.names), "mean": [float(v) for v in self.mean],
                "std": [float(v) for v in self.std], "count": self.count}

    @classmethod
    def from_json(cls, d: dict) -> "CorpusStats":
        return cls(tuple(d["names"]), np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float), int(d["count"]))


def uniqueness(values, stats: CorpusStats) -> float:
    """Norm of the z-scored visual sub-vector over sqrt of the number of usable features.

    Features with zero corpus spread are skipped.

    Raises:
        DegenerateCorpus: every feature has zero spread.
    """
    x = np.asarray(values, dtype=np.float64)
    # relative floor keeps float round-off in constant features from counting as spread
    scale = np.maximum(np.abs(stats.mean), 1.0)
    keep = stats.std > 1e-12 * scale
    if not keep.any():
        raise DegenerateCorpus("every corpus feature has zero spread")
    z = (x[keep] - stats.mean[keep]) / stats.std[keep]
    return float(np.linalg.norm(z) / math.sqrt(int(keep.sum())))
