"""Face metadata providers: remote HTTP service, JSONL file ingest, offline stub.

A picture without a detectable face is a normal outcome (``detected=False``),
never an error. Errors are reserved for providers that cannot be reached or
that answer with something unparseable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy import ndimage

from .errors import DuplicatePictureId, MalformedResponse, ProviderUnavailable, SchemaMismatch
from .imaging import ImageBuffer, Region, encode_png

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
LANDMARKS = ("left_eye", "right_eye", "nose", "mouth")
RACES = ("caucasian", "black", "asian")
GLASSES = ("none", "reading", "sunglasses")
SEXES = ("male", "female")

# share of pictures in which the stub reports a face on an unstructured corpus
STUB_DETECTION_RATE = 0.53

ENV_ENDPOINT = "AMBIANCE_FACE_ENDPOINT"
ENV_API_KEY = "AMBIANCE_FACE_API_KEY"
ENV_API_SECRET = "AMBIANCE_FACE_API_SECRET"


@dataclass(frozen=True)
class FaceAnnotation:
    detected: bool
    bbox: Region | None = None
    landmarks: dict[str, tuple[float, float]] | None = None
    smile: float | None = None
    age: float | None = None
    sex: str | None = None
    sex_confidence: float | None = None
    race: tuple[float, float, float] | None = None
    glasses: str | None = None
    tilt_deg: float | None = None

    def validate(self) -> "FaceAnnotation":
        """Check the invariants; raises :class:`SchemaMismatch` on violation."""
        if not self.detected:
            extra = [k for k in ("bbox", "landmarks", "smile", "age", "sex", "sex_confidence",
                                 "race", "glasses", "tilt_deg") if getattr(self, k) is not None]
            if extra:
                raise SchemaMismatch(f"undetected face carries fields {extra}")
            return self
        missing = [k for k in ("bbox", "landmarks", "smile", "age", "sex", "race", "glasses", "tilt_deg")
                   if getattr(self, k) is None]
        if missing:
            raise SchemaMismatch(f"detected face lacks fields {missing}")
        b = self.bbox
        if not (b.x1 > b.x0 and b.y1 > b.y0):
            raise SchemaMismatch(f"empty bbox {b.as_list()}")
        if set(self.landmarks) != set(LANDMARKS):
            raise SchemaMismatch(f"landmarks must be exactly {LANDMARKS}")
        loose = b.inflate(0.2)
        for name, (x, y) in self.landmarks.items():
            if not loose.contains(x, y):
                raise SchemaMismatch(f"landmark {name} at ({x:.1f}, {y:.1f}) lies outside the face box")
        if not 0.0 <= self.smile <= 1.0:
            raise SchemaMismatch(f"smile {self.smile} outside [0, 1]")
        if self.age < 0:
            raise SchemaMismatch(f"negative age {self.age}")
        if self.sex not in SEXES:
            raise SchemaMismatch(f"unknown sex {self.sex!r}")
        if self.sex_confidence is not None and not 0.0 <= self.sex_confidence <= 1.0:
            raise SchemaMismatch(f"sex confidence {self.sex_confidence} outside [0, 1]")
        if len(self.race) != 3 or any(p < 0 for p in self.race) or abs(sum(self.race) - 1.0) > 1e-6:
            raise SchemaMismatch(f"race probabilities {self.race} must be non-negative and sum to 1")
        if self.glasses not in GLASSES:
            raise SchemaMismatch(f"unknown glasses value {self.glasses!r}")
        if not math.isfinite(self.tilt_deg):
            raise SchemaMismatch("tilt must be finite")
        return self

    def to_record(self, picture_id: str) -> dict:
        rec: dict = {"picture_id": picture_id, "detected": self.detected}
        if self.detected:
            rec.update(
                bbox=self.bbox.as_list(),
                landmarks={k: [round(float(v[0]), 4), round(float(v[1]), 4)] for k, v in sorted(self.landmarks.items())},
                smile=round(float(self.smile), 6),
                age=round(float(self.age), 4),
                sex=self.sex,
                sex_confidence=None if self.sex_confidence is None else round(float(self.sex_confidence), 6),
                race=dict(zip(RACES, (round(float(p), 9) for p in self.race))),
                glasses=self.glasses,
                tilt_deg=round(float(self.tilt_deg), 4),
            )
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "FaceAnnotation":
        try:
            if not rec["detected"]:
                extra = set(rec) - {"picture_id", "detected"}
                if extra:
                    raise SchemaMismatch(f"undetected face carries fields {sorted(extra)}")
                return cls(False)
            race = rec["race"]
            if isinstance(race, dict):
                race = tuple(float(race[k]) for k in RACES)
            lm = rec["landmarks"]
            return cls(
                detected=True,
                bbox=Region(*(int(v) for v in rec["bbox"])),
                landmarks={k: (float(v[0]), float(v[1])) for k, v in lm.items()},
                smile=float(rec["smile"]),
                age=float(rec["age"]),
                sex=rec["sex"],
                sex_confidence=None if rec.get("sex_confidence") is None else float(rec["sex_confidence"]),
                race=tuple(race),
                glasses=rec["glasses"],
                tilt_deg=float(rec["tilt_deg"]),
            ).validate()
        except SchemaMismatch:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaMismatch(f"bad annotation record: {exc!r}") from exc


NO_FACE = FaceAnnotation(False)


@dataclass(frozen=True)
class AnnotationSource:
    """Which provider to use; exactly one kind is active per run."""

    kind: str  # "remote" | "file" | "stub"
    path: str | None = None
    endpoint: str | None = None
    api_key: str | None = field(default=None, repr=False)
    api_secret: str | None = field(default=None, repr=False)
    seed: int = 0
    timeout: float = 10.0
    max_concurrency: int = 4

    def __post_init__(self):
        if self.kind not in ("remote", "file", "stub"):
            raise ValueError(f"unknown annotation source kind {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ValueError("file source needs a path")

    @classmethod
    def remote_from_env(cls, endpoint: str | None = None, **kw) -> "AnnotationSource":
        return cls(
            "remote",
            endpoint=endpoint or os.environ.get(ENV_ENDPOINT),
            api_key=os.environ.get(ENV_API_KEY),
            api_secret=os.environ.get(ENV_API_SECRET),
            **kw,
        )

    def fingerprint(self) -> str:
        """Stable identity used in cache keys (never includes credentials)."""
        if self.kind == "stub":
            return f"stub:{self.seed}"
        if self.kind == "file":
            return "file:" + hashlib.sha256(Path(self.path).read_bytes()).hexdigest()[:16]
        return f"remote:{self.endpoint}"


# ---------------------------------------------------------------- stub

def _stub_rng(image: ImageBuffer, seed: int) -> np.random.Generator:
    digest = hashlib.sha256(f"{image.content_hash}:{int(seed)}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:16], "little"))


def _face_blob(lum: np.ndarray):
    """Largest bright elliptical blob, or None; geometry for face-like fixtures."""
    h, w = lum.shape
    thresh = (lum.mean() + lum.max()) / 2.0
    labels, n = ndimage.label(lum > thresh)
    if n == 0:
        return None
    sizes = np.bincount(labels.ravel())[1:]
    best = int(np.argmax(sizes)) + 1
    area = int(sizes[best - 1])
    if area < max(64, 0.04 * h * w):
        return None
    ys, xs = np.nonzero(labels == best)
    box = Region(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)
    fill = area / box.area
    aspect = box.height / box.width
    if not (0.6 <= fill <= 0.92 and 0.9 <= aspect <= 1.8):
        return None
    # dark holes inside the blob's filled outline are eyes and mouth
    filled = ndimage.binary_fill_holes(labels == best)
    holes = filled & ~(labels == best)
    cx, cy = box.center
    upper = holes.copy()
    upper[int(cy):, :] = False

    def centroid(mask):
        yy, xx = np.nonzero(mask)
        return (float(xx.mean()), float(yy.mean())) if yy.size else None

    left_mask = upper.copy()
    left_mask[:, int(cx):] = False
    right_mask = upper.copy()
    right_mask[:, : int(cx)] = False
    lower = holes.copy()
    lower[: int(box.y0 + 0.6 * box.height), :] = False
    le, re, mo = centroid(left_mask), centroid(right_mask), centroid(lower)
    canon = _canonical_landmarks(box, 0.0)
    le = le or canon["left_eye"]
    re = re or canon["right_eye"]
    mo = mo or canon["mouth"]
    tilt = math.degrees(math.atan2(re[1] - le[1], re[0] - le[0]))
    nose = ((le[0] + re[0] + 2 * mo[0]) / 4.0, (le[1] + re[1] + 2 * mo[1]) / 4.0)
    return box, {"left_eye": le, "right_eye": re, "nose": nose, "mouth": mo}, tilt


def _canonical_landmarks(box: Region, tilt_deg: float) -> dict[str, tuple[float, float]]:
    cx, cy = box.center
    a = math.radians(tilt_deg)
    rel = {"left_eye": (-0.2, -0.12), "right_eye": (0.2, -0.12), "nose": (0.0, 0.08), "mouth": (0.0, 0.28)}
    out = {}
    for k, (dx, dy) in rel.items():
        dx *= box.width
        dy *= box.height
        out[k] = (cx + dx * math.cos(a) - dy * math.sin(a), cy + dx * math.sin(a) + dy * math.cos(a))
    return out


def _brightest_quadrant(lum: np.ndarray) -> Region:
    h, w = lum.shape
    h2, w2 = max(h // 2, 1), max(w // 2, 1)
    boxes = [Region(0, 0, w2, h2), Region(w2, 0, w, h2), Region(0, h2, w2, h), Region(w2, h2, w, h)]
    boxes = [b for b in boxes if b.area > 0]
    best = max(boxes, key=lambda b: (lum[b.slices()].mean(), -boxes.index(b)))
    ix, iy = int(best.width * 0.1), int(best.height * 0.1)
    return Region(best.x0 + ix, best.y0 + iy, max(best.x1 - ix, best.x0 + ix + 1), max(best.y1 - iy, best.y0 + iy + 1))


def stub_annotate(image: ImageBuffer, seed: int = 0) -> FaceAnnotation:
    """Deterministic pseudo face analysis for hermetic runs.

    Flat images never contain a face. Images with a bright elliptical blob
    (the drawn-face fixtures) are always detected, with geometry read off the
    blob. Any other image is detected with probability
    :data:`STUB_DETECTION_RATE`, decided by hashing its content with the seed,
    and gets a bounding box inside its brightest quadrant. Attributes are
    drawn from the same hash-seeded stream.
    """
    lum = image.luminance()
    if float(lum.max() - lum.min()) < 2.0 / 255.0:
        return NO_FACE
    rng = _stub_rng(image, seed)
    coin = rng.random()
    blob = _face_blob(lum)
    if blob is not None:
        box, landmarks, tilt = blob
    else:
        if coin >= STUB_DETECTION_RATE:
            return NO_FACE
        box = _brightest_quadrant(lum)
        tilt = float(rng.uniform(-20.0, 20.0))
        landmarks = _canonical_landmarks(box, tilt)
    race = rng.dirichlet((1.0, 1.0, 1.0))
    race = race / race.sum()
    return FaceAnnotation(
        detected=True,
        bbox=box,
        landmarks=landmarks,
        smile=float(rng.random()),
        age=float(np.round(rng.uniform(16.0, 70.0), 1)),
        sex=SEXES[int(rng.integers(2))],
        sex_confidence=float(rng.uniform(0.5, 1.0)),
        race=(float(race[0]), float(race[1]), float(1.0 - race[0] - race[1])),
        glasses=GLASSES[int(rng.choice(3, p=(0.7, 0.2, 0.1)))],
        tilt_deg=float(tilt),
    ).validate()


# ---------------------------------------------------------------- file ingest

@dataclass
class AnnotationFinding:
    line: int
    picture_id: str | None
    message: str

    def __str__(self):
        where = f"line {self.line}"
        if self.picture_id:
            where += f" ({self.picture_id})"
        return f"{where}: {self.message}"


def scan_annotation_file(path: str | Path) -> tuple[dict[str, FaceAnnotation], list[AnnotationFinding]]:
    """Parse a JSONL annotation file, collecting every problem instead of stopping."""
    out: dict[str, FaceAnnotation] = {}
    findings: list[AnnotationFinding] = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ProviderUnavailable(f"cannot read annotation file {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        return out, [AnnotationFinding(1, None, "missing header line")]
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        return out, [AnnotationFinding(1, None, f"header is not JSON: {exc}")]
    if not isinstance(header, dict) or header.get("schema_version") != SCHEMA_VERSION:
        return out, [AnnotationFinding(1, None, f"unsupported schema_version {header.get('schema_version') if isinstance(header, dict) else None!r}")]
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            findings.append(AnnotationFinding(lineno, None, f"invalid JSON: {exc}"))
            continue
        pid = rec.get("picture_id") if isinstance(rec, dict) else None
        if not isinstance(pid, str) or not pid:
            findings.append(AnnotationFinding(lineno, None, "record lacks picture_id"))
            continue
        if pid in out:
            findings.append(AnnotationFinding(lineno, pid, "duplicate picture id"))
            continue
        try:
            out[pid] = FaceAnnotation.from_record(rec)
        except SchemaMismatch as exc:
            findings.append(AnnotationFinding(lineno, pid, str(exc)))
    return out, findings


def parse_annotation_file(path: str | Path) -> dict[str, FaceAnnotation]:
    """Load a JSONL annotation file into ``{picture_id: FaceAnnotation}``.

    Raises:
        SchemaMismatch: unrecognised header or an invalid record (the message
            names the line and picture id).
        DuplicatePictureId: a picture id appears twice.
    """
    out, findings = scan_annotation_file(path)
    for f in findings:
        if f.message == "duplicate picture id":
            raise DuplicatePictureId(f"{path}: {f}")
    if findings:
        raise SchemaMismatch(f"{path}: {findings[0]}")
    return out


def write_annotation_file(path: str | Path, annotations: dict[str, FaceAnnotation]) -> None:
    lines = [json.dumps({"schema_version": SCHEMA_VERSION, "type": "face_annotations"})]
    for pid in sorted(annotations):
        lines.append(json.dumps(annotations[pid].to_record(pid), sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@lru_cache(maxsize=8)
def _cached_file(path: str, mtime_ns: int, size: int) -> dict[str, FaceAnnotation]:
    return parse_annotation_file(path)


def load_annotation_file(path: str | Path) -> dict[str, FaceAnnotation]:
    p = Path(path)
    try:
        st = p.stat()
    except OSError as exc:
        raise ProviderUnavailable(f"cannot read annotation file {p}: {exc}") from exc
    return _cached_file(str(p.resolve()), st.st_mtime_ns, st.st_size)


# ---------------------------------------------------------------- remote

_LANDMARK_KEYS = {
    "left_eye": ("left_eye_center", "left_eye"),
    "right_eye": ("right_eye_center", "right_eye"),
    "nose": ("nose_tip", "nose"),
    "mouth": ("mouth_center", "mouth"),
}
_ETHNICITY = {"white": "caucasian", "caucasian": "caucasian", "black": "black", "asian": "asian"}
_GLASS = {"none": "none", "normal": "reading", "reading": "reading", "dark": "sunglasses", "sunglasses": "sunglasses"}


def _point(d) -> tuple[float, float]:
    return float(d["x"]), float(d["y"])


def parse_service_face(face: dict) -> FaceAnnotation:
    """Convert one face object of a Face++-style detect response."""
    try:
        rect = face["face_rectangle"]
        left, top = int(rect["left"]), int(rect["top"])
        bbox = Region(left, top, left + int(rect["width"]), top + int(rect["height"]))
        raw = face.get("landmark") or {}
        landmarks = {}
        for name, keys in _LANDMARK_KEYS.items():
            for key in keys:
                if key in raw:
                    landmarks[name] = _point(raw[key])
                    break
        if "mouth" not in landmarks and {"mouth_left_corner", "mouth_right_corner"} <= set(raw):
            (lx, ly), (rx, ry) = _point(raw["mouth_left_corner"]), _point(raw["mouth_right_corner"])
            landmarks["mouth"] = ((lx + rx) / 2.0, (ly + ry) / 2.0)
        if set(landmarks) != set(LANDMARKS):
            raise MalformedResponse(f"incomplete landmark set {sorted(landmarks)}")
        attrs = face["attributes"]
        smile = float(attrs["smile"]["value"]) / 100.0
        age = float(attrs["age"]["value"])
        sex = str(attrs["gender"]["value"]).lower()
        sex_conf = attrs["gender"].get("confidence")
        eth = attrs.get("ethnicity", {})
        if "probabilities" in eth:
            probs = eth["probabilities"]
            race = np.array([float(probs.get(k, 0.0)) for k in RACES])
        else:
            label = _ETHNICITY.get(str(eth.get("value", "")).lower())
            race = np.array([float(label == k) for k in RACES]) if label else np.full(3, 1.0 / 3.0)
        if race.sum() <= 0:
            raise MalformedResponse("ethnicity probabilities are all zero")
        race = race / race.sum()
        glass_raw = (attrs.get("eyeglass") or attrs.get("glass") or {}).get("value", "none")
        glasses = _GLASS.get(str(glass_raw).lower())
        if glasses is None:
            raise MalformedResponse(f"unknown glasses value {glass_raw!r}")
        pose = attrs.get("headpose", {})
        if "roll_angle" in pose:
            tilt = float(pose["roll_angle"])
        else:
            (lx, ly), (rx, ry) = landmarks["left_eye"], landmarks["right_eye"]
            tilt = math.degrees(math.atan2(ry - ly, rx - lx))
        ann = FaceAnnotation(
            detected=True, bbox=bbox, landmarks=landmarks, smile=min(max(smile, 0.0), 1.0), age=age,
            sex=sex, sex_confidence=None if sex_conf is None else float(sex_conf) / (100.0 if float(sex_conf) > 1 else 1.0),
            race=(float(race[0]), float(race[1]), float(1.0 - race[0] - race[1])), glasses=glasses, tilt_deg=tilt,
        )
        return ann.validate()
    except MalformedResponse:
        raise
    except (KeyError, TypeError, ValueError, SchemaMismatch) as exc:
        raise MalformedResponse(f"cannot interpret face record: {exc!r}") from exc


def parse_service_response(payload: dict) -> FaceAnnotation:
    """Pick the highest-confidence face (largest box if none is reported)."""
    if not isinstance(payload, dict) or "faces" not in payload:
        raise MalformedResponse("response has no 'faces' list")
    faces = payload["faces"]
    if not faces:
        return NO_FACE

    def rank(face):
        conf = face.get("face_confidence", face.get("confidence"))
        rect = face.get("face_rectangle", {})
        area = float(rect.get("width", 0)) * float(rect.get("height", 0))
        return (float(conf) if conf is not None else -1.0, area)

    return parse_service_face(max(faces, key=rank))


class RemoteFaceClient:
    """HTTP client for a Face++-style detect endpoint.

    Images are uploaded as multipart PNG. 5xx answers and transport errors
    are retried up to ``max_retries`` times with exponential backoff.
    """

    def __init__(self, endpoint: str | None, api_key: str | None = None, api_secret: str | None = None,
                 timeout: float = 10.0, max_retries: int = 3, backoff: float = 0.5,
                 max_concurrency: int = 4, transport=None, sleep=time.sleep):
        import httpx

        if not endpoint:
            raise ProviderUnavailable(f"no annotation endpoint configured (set {ENV_ENDPOINT})")
        self.endpoint = endpoint
        self.api_key = api_key
        self.api_secret = api_secret
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_concurrency = max(1, int(max_concurrency))
        self._sleep = sleep
        self._httpx = httpx
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self):
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def annotate(self, image: ImageBuffer) -> FaceAnnotation:
        httpx = self._httpx
        data = {"return_landmark": "1", "return_attributes": "gender,age,smiling,eyeglass,headpose,ethnicity"}
        if self.api_key:
            data["api_key"] = self.api_key
        if self.api_secret:
            data["api_secret"] = self.api_secret
        files = {"image_file": ("image.png", encode_png(image), "image/png")}
        last = "no attempt made"
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(self.endpoint, data=data, files=files)
            except httpx.HTTPError as exc:
                last = f"transport error: {exc}"
                log.debug("annotation request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise ProviderUnavailable(f"annotation service refused request: HTTP {resp.status_code}")
            try:
                payload = resp.json()
            except ValueError as exc:
                raise MalformedResponse(f"response is not JSON: {exc}") from exc
            return parse_service_response(payload)
        raise ProviderUnavailable(f"annotation service unavailable after {self.max_retries + 1} attempts: {last}")

    def annotate_many(self, images: Iterable[ImageBuffer]) -> list[FaceAnnotation]:
        """Annotate concurrently (at most ``max_concurrency`` requests in flight), preserving order."""
        images = list(images)
        with ThreadPoolExecutor(max_workers=self.max_concurrency) as pool:
            return list(pool.map(self.annotate, images))


# ---------------------------------------------------------------- dispatch

def annotate(image: ImageBuffer, source: AnnotationSource, picture_id: str | None = None) -> FaceAnnotation:
    """Face annotation for one picture from the configured source.

    The file source looks the picture up by ``picture_id``.
    """
    if source.kind == "stub":
        return stub_annotate(image, source.seed)
    if source.kind == "file":
        table = load_annotation_file(source.path)
        if picture_id is None or picture_id not in table:
            raise ProviderUnavailable(f"{source.path} has no annotation for picture {picture_id!r}")
        return table[picture_id]
    with RemoteFaceClient(source.endpoint, source.api_key, source.api_secret, timeout=source.timeout,
                          max_concurrency=source.max_concurrency) as client:
        return client.annotate(image)
