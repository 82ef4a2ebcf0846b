"""Raster images, color conversion and region addressing.

Images are stored as immutable ``(height, width, 3)`` uint8 arrays. Extractors
never mutate them; they derive float working copies on demand.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import CorruptData, UnsupportedFormat

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
JPEG_SIGNATURE = b"\xff\xd8\xff"

# Rec.601 luma weights
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Decoded 8-bit RGB raster, row-major."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixels, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must have positive width and height")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255):
                raise ValueError("channel values must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @cached_property
    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.width}x{self.height}:".encode())
        h.update(self.pixels.tobytes())
        return h.hexdigest()

    def luminance(self) -> np.ndarray:
        """Per-pixel luminance in [0, 1] as a float64 ``(H, W)`` array."""
        return luminance_array(self.pixels)

    def hsv(self) -> np.ndarray:
        return rgb_to_hsv_array(self.pixels)

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __hash__(self):
        return hash(self.content_hash)

    def __repr__(self):
        return f"ImageBuffer({self.width}x{self.height})"


@dataclass(frozen=True)
class HsvPixel:
    hue: float
    saturation: float
    value: float


@dataclass(frozen=True)
class Region:
    """Inclusive-exclusive pixel box ``[x0, x1) x [y0, y1)``."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return max(0, self.width) * max(0, self.height)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    def clamp(self, width: int, height: int) -> "Region":
        """Clip to the image bounds, never returning an empty box.

        A box lying entirely outside the image collapses onto the nearest
        edge pixel, so callers always get at least one pixel to sample.
        """
        x0 = min(max(self.x0, 0), width - 1)
        y0 = min(max(self.y0, 0), height - 1)
        x1 = max(min(self.x1, width), x0 + 1)
        y1 = max(min(self.y1, height), y0 + 1)
        return Region(x0, y0, x1, y1)

    def inflate(self, fraction: float) -> "Region":
        dx = self.width * fraction / 2.0
        dy = self.height * fraction / 2.0
        return Region(
            math.floor(self.x0 - dx), math.floor(self.y0 - dy),
            math.ceil(self.x1 + dx), math.ceil(self.y1 + dy),
        )

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y1), slice(self.x0, self.x1)

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def around(cls, x: float, y: float, size: int) -> "Region":
        """Square window of side ``size`` centred on a point."""
        half = size // 2
        cx, cy = int(round(x)), int(round(y))
        return cls(cx - half, cy - half, cx - half + size, cy - half + size)


def decode_image(data: bytes) -> ImageBuffer:
    """Decode PNG (or JPEG) bytes into an :class:`ImageBuffer`.

    Alpha is composited over white.

    Raises:
        UnsupportedFormat: the bytes are not PNG or JPEG.
        CorruptData: the stream is truncated or otherwise undecodable.
    """
    if data.startswith(PNG_SIGNATURE):
        expected = "PNG"
    elif data.startswith(JPEG_SIGNATURE):
        expected = "JPEG"
    else:
        raise UnsupportedFormat("only PNG and JPEG images are supported")
    try:
        with Image.open(io.BytesIO(data), formats=[expected]) as im:
            im.load()
            if im.mode in ("RGBA", "LA", "PA") or (im.mode == "P" and "transparency" in im.info):
                rgba = im.convert("RGBA")
                white = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
                rgb = Image.alpha_composite(white, rgba).convert("RGB")
            else:
                rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except (OSError, SyntaxError, ValueError, UnidentifiedImageError, EOFError) as exc:
        raise CorruptData(f"cannot decode {expected} stream: {exc}") from exc
    return ImageBuffer(arr)


def encode_png(image: ImageBuffer | np.ndarray) -> bytes:
    px = image.pixels if isinstance(image, ImageBuffer) else np.asarray(image, dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(px, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def load_image(path) -> ImageBuffer:
    with open(path, "rb") as fh:
        return decode_image(fh.read())


def to_hsv(pixel) -> HsvPixel:
    """Hexcone RGB -> HSV for one pixel; achromatic pixels get hue 0."""
    r, g, b = (float(c) / 255.0 for c in pixel)
    mx, mn = max(r, g, b), min(r, g, b)
    delta = mx - mn
    if delta == 0:
        hue = 0.0
    elif mx == r:
        hue = (60.0 * ((g - b) / delta)) % 360.0
    elif mx == g:
        hue = 60.0 * ((b - r) / delta) + 120.0
    else:
        hue = 60.0 * ((r - g) / delta) + 240.0
    sat = 0.0 if mx == 0 else delta / mx
    return HsvPixel(hue, sat, mx)


def from_hsv(hsv: HsvPixel) -> tuple[int, int, int]:
    h = (hsv.hue % 360.0) / 60.0
    c = hsv.value * hsv.saturation
    x = c * (1 - abs(h % 2 - 1))
    m = hsv.value - c
    sector = int(h) % 6
    r, g, b = [(c, x, 0), (x, c, 0), (0, c, x), (0, x, c), (x, 0, c), (c, 0, x)][sector]
    return tuple(int(round((v + m) * 255)) for v in (r, g, b))


def luminance(pixel) -> float:
    r, g, b = (float(c) for c in pixel)
    return (0.299 * r + 0.587 * g + 0.114 * b) / 255.0


def luminance_array(rgb: np.ndarray) -> np.ndarray:
    return np.asarray(rgb, dtype=np.float64) @ LUMA_WEIGHTS / 255.0


def rgb_to_hsv_array(rgb: np.ndarray) -> np.ndarray:
    """Vectorised hexcone conversion of an ``(..., 3)`` array with 0-255 channels.

    Returns an ``(..., 3)`` float array of (hue degrees, saturation, value).
    """
    rgb = np.asarray(rgb, dtype=np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    safe = np.where(delta > 0, delta, 1.0)
    hue = np.zeros_like(mx)
    rmax = (mx == r) & (delta > 0)
    gmax = (mx == g) & (delta > 0) & ~rmax
    bmax = (delta > 0) & ~rmax & ~gmax
    hue[rmax] = np.mod(60.0 * (g - b)[rmax] / safe[rmax], 360.0)
    hue[gmax] = 60.0 * (b - r)[gmax] / safe[gmax] + 120.0
    hue[bmax] = 60.0 * (r - g)[bmax] / safe[bmax] + 240.0
    sat = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    return np.stack([hue, sat, mx], axis=-1)


def working_image(image: ImageBuffer, max_dim: int = 512, upsample: bool = True) -> tuple[np.ndarray, float]:
    """Power-of-two resample so the longest side lands in ``(max_dim/2, max_dim]``.

    Large images are box-averaged by ``2**m``; small ones are replicated by
    ``2**m`` unless ``upsample`` is false. Because both operations commute with nearest-neighbour
    upscaling by powers of two, an image and its 2x upscale map onto the
    same working raster.

    Returns:
        float64 ``(H, W, 3)`` array with 0-255 channels and the linear scale
        factor applied (working pixels per source pixel).
    """
    px = image.pixels.astype(np.float64)
    longest = max(image.width, image.height)
    scale = 1
    if longest > max_dim:
        f = 1
        while longest / f > max_dim:
            f *= 2
        h, w = image.height // f, image.width // f
        h, w = max(h, 1), max(w, 1)
        px = px[: h * f, : w * f].reshape(h, f, w, f, 3).mean(axis=(1, 3))
        return px, 1.0 / f
    if not upsample:
        return px, 1.0
    while longest * scale * 2 <= max_dim:
        scale *= 2
    if scale > 1:
        px = np.repeat(np.repeat(px, scale, axis=0), scale, axis=1)
    return px, float(scale)
