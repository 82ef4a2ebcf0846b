"""Procedural images and corpora: test fixtures, the demo dataset, planted-signal data.

Everything here is seeded and deterministic.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .imaging import ImageBuffer

SKIN = (224, 180, 150)


def solid(width: int, height: int, color) -> ImageBuffer:
    px = np.empty((height, width, 3), dtype=np.uint8)
    px[...] = color
    return ImageBuffer(px)


def checkerboard(width: int, height: int, square: int = 8, colors=((0, 0, 0), (255, 255, 255))) -> ImageBuffer:
    yy, xx = np.mgrid[0:height, 0:width]
    mask = ((yy // square) + (xx // square)) % 2 == 1
    px = np.empty((height, width, 3), dtype=np.uint8)
    px[~mask] = colors[0]
    px[mask] = colors[1]
    return ImageBuffer(px)


def vertical_stripes(width: int, height: int, stripe: int = 1, colors=((0, 0, 0), (255, 255, 255))) -> ImageBuffer:
    xx = np.arange(width)
    mask = np.broadcast_to(((xx // stripe) % 2 == 1)[None, :], (height, width))
    px = np.empty((height, width, 3), dtype=np.uint8)
    px[~mask] = colors[0]
    px[mask] = colors[1]
    return ImageBuffer(px)


def halves(width: int, height: int, left, right) -> ImageBuffer:
    px = np.empty((height, width, 3), dtype=np.uint8)
    px[:, : width // 2] = left
    px[:, width // 2:] = right
    return ImageBuffer(px)


def quadrants(width: int, height: int, colors) -> ImageBuffer:
    """Four solid quadrants: top-left, top-right, bottom-left, bottom-right."""
    px = np.empty((height, width, 3), dtype=np.uint8)
    h2, w2 = height // 2, width // 2
    px[:h2, :w2] = colors[0]
    px[:h2, w2:] = colors[1]
    px[h2:, :w2] = colors[2]
    px[h2:, w2:] = colors[3]
    return ImageBuffer(px)


def horizontal_gradient(width: int, height: int) -> ImageBuffer:
    ramp = np.rint(np.linspace(0, 255, width)).astype(np.uint8)
    px = np.repeat(np.repeat(ramp[None, :, None], height, axis=0), 3, axis=2)
    return ImageBuffer(px)


def gray_noise(width: int, height: int, seed: int = 0) -> ImageBuffer:
    rng = np.random.default_rng(seed)
    g = rng.integers(0, 256, size=(height, width), dtype=np.uint8)
    return ImageBuffer(np.repeat(g[:, :, None], 3, axis=2))


def rgb_noise(width: int, height: int, seed: int = 0) -> ImageBuffer:
    rng = np.random.default_rng(seed)
    return ImageBuffer(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))


def mirror(image: ImageBuffer) -> ImageBuffer:
    return ImageBuffer(image.pixels[:, ::-1])


def rotate180(image: ImageBuffer) -> ImageBuffer:
    return ImageBuffer(image.pixels[::-1, ::-1])


def upscale2(image: ImageBuffer) -> ImageBuffer:
    return ImageBuffer(np.repeat(np.repeat(image.pixels, 2, axis=0), 2, axis=1))


def box_blur(image: ImageBuffer, radius: int, region=None) -> ImageBuffer:
    """Box blur of side ``2*radius+1`` (reflect boundary), optionally inside a region only."""
    px = image.pixels.astype(np.float64)
    size = 2 * radius + 1
    blurred = ndimage.uniform_filter(px, size=(size, size, 1), mode="reflect")
    out = np.clip(np.rint(blurred), 0, 255).astype(np.uint8)
    if region is not None:
        res = image.pixels.copy()
        sl = region.slices()
        res[sl] = out[sl]
        out = res
    return ImageBuffer(out)


def add_noise(image: ImageBuffer, amplitude: float, seed: int = 0) -> ImageBuffer:
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-1.0, 1.0, size=image.pixels.shape[:2])[:, :, None] * amplitude
    return ImageBuffer(np.clip(np.rint(image.pixels + noise), 0, 255).astype(np.uint8))


def _stamp(px: np.ndarray, mask: np.ndarray, color) -> None:
    px[mask] = color


def disk_mask(width: int, height: int, cx: float, cy: float, r: float) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def ring_mask(width: int, height: int, cx: float, cy: float, r: float, thickness: float = 1.0) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    d = np.hypot(xx - cx, yy - cy)
    return np.abs(d - r) <= thickness / 2.0


def ellipse_mask(width: int, height: int, cx: float, cy: float, rx: float, ry: float, angle_deg: float = 0.0) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    a = math.radians(angle_deg)
    dx, dy = xx - cx, yy - cy
    u = dx * math.cos(a) + dy * math.sin(a)
    v = -dx * math.sin(a) + dy * math.cos(a)
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def circle_outlines(width: int, height: int, circles, background=(0, 0, 0), color=(255, 255, 255)) -> ImageBuffer:
    px = np.empty((height, width, 3), dtype=np.uint8)
    px[...] = background
    for cx, cy, r in circles:
        _stamp(px, ring_mask(width, height, cx, cy, r), color)
    return ImageBuffer(px)


def filled_disk(width: int, height: int, cx: float, cy: float, r: float,
                background=(0, 0, 0), color=(255, 255, 255)) -> ImageBuffer:
    px = np.empty((height, width, 3), dtype=np.uint8)
    px[...] = background
    _stamp(px, disk_mask(width, height, cx, cy, r), color)
    return ImageBuffer(px)


def face_geometry(width: int, height: int, cx: float, cy: float, face_w: float, tilt_deg: float = 0.0) -> dict:
    """Landmark positions and bbox of a drawn face (matching :func:`draw_face`)."""
    rx, ry = face_w / 2.0, face_w * 0.65
    a = math.radians(tilt_deg)

    def rot(dx, dy):
        return (cx + dx * math.cos(a) - dy * math.sin(a), cy + dx * math.sin(a) + dy * math.cos(a))

    # axis-aligned bbox of the rotated ellipse
    hx = math.sqrt((rx * math.cos(a)) ** 2 + (ry * math.sin(a)) ** 2)
    hy = math.sqrt((rx * math.sin(a)) ** 2 + (ry * math.cos(a)) ** 2)
    return {
        "bbox": (int(math.floor(cx - hx)), int(math.floor(cy - hy)), int(math.ceil(cx + hx)) + 1, int(math.ceil(cy + hy)) + 1),
        "left_eye": rot(-0.38 * rx, -0.22 * ry),
        "right_eye": rot(0.38 * rx, -0.22 * ry),
        "nose": rot(0.0, 0.12 * ry),
        "mouth": rot(0.0, 0.5 * ry),
        "rx": rx,
        "ry": ry,
    }


def draw_face(px: np.ndarray, cx: float, cy: float, face_w: float, tilt_deg: float = 0.0,
              skin=SKIN, smile: bool = False, glasses: str = "none", lip=(170, 40, 50)) -> dict:
    """Paint a schematic face into ``px`` in place; returns its geometry."""
    height, width = px.shape[:2]
    g = face_geometry(width, height, cx, cy, face_w, tilt_deg)
    rx, ry = g["rx"], g["ry"]
    _stamp(px, ellipse_mask(width, height, cx, cy, rx, ry, tilt_deg), skin)
    eye_r = max(1.5, rx * 0.12)
    for key in ("left_eye", "right_eye"):
        ex, ey = g[key]
        if glasses == "sunglasses":
            _stamp(px, disk_mask(width, height, ex, ey, eye_r * 2.2), (20, 20, 25))
        else:
            _stamp(px, disk_mask(width, height, ex, ey, eye_r), (35, 25, 20))
            if glasses == "reading":
                _stamp(px, ring_mask(width, height, ex, ey, eye_r * 2.4, max(1.0, eye_r * 0.4)), (60, 60, 70))
    nx, ny = g["nose"]
    _stamp(px, disk_mask(width, height, nx, ny, max(1.0, rx * 0.07)), (190, 140, 115))
    mx, my = g["mouth"]
    mw, mh = rx * 0.35, max(1.0, ry * 0.05)
    if smile:
        _stamp(px, ellipse_mask(width, height, mx, my, mw, mh * 2.2, tilt_deg) &
               ~ellipse_mask(width, height, mx, my - mh * 1.6, mw, mh * 2.0, tilt_deg), lip)
    else:
        _stamp(px, ellipse_mask(width, height, mx, my, mw, mh, tilt_deg), lip)
    return g


def synthetic_face_centered(size: int = 128, background=(40, 40, 40)) -> ImageBuffer:
    """Upright face centred in a dark square image."""
    px = np.empty((size, size, 3), dtype=np.uint8)
    px[...] = background
    draw_face(px, (size - 1) / 2.0, (size - 1) / 2.0, size * 0.45)
    return ImageBuffer(px)
