"""Face-independent stylistic features.

Every extractor runs on the power-of-two working raster from
:func:`ambiance.imaging.working_image`, which makes the features identical
for an image and its nearest-neighbour 2x upscale.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ImageTooSmall
from .imaging import ImageBuffer, luminance_array, rgb_to_hsv_array, working_image
from .registry import constants

COLOR_NAMES = (
    "black", "blue", "brown", "green", "gray", "orange",
    "pink", "purple", "red", "white", "yellow",
)


@dataclass(frozen=True)
class VisualFeatures:
    camera_shake: float
    contrast: float
    image_order: float
    image_complexity: float
    birkhoff_ratio: float
    level_of_detail: int
    level_of_detail_normalized: float
    symmetry: float
    circle_count: int
    color_name_hist: tuple[float, ...]
    contrast_red: float
    contrast_green: float
    contrast_blue: float
    edge_density: float
    hue_entropy: float
    saturation_std: float

    def as_feature_dict(self) -> dict[str, float]:
        """Values keyed by registry feature name."""
        d = asdict(self)
        hist = d.pop("color_name_hist")
        d.pop("level_of_detail_normalized")
        d["level_of_detail"] = float(d["level_of_detail"])
        d["circle_count"] = float(d["circle_count"])
        for name, frac in zip(COLOR_NAMES, hist):
            d[f"color_{name}"] = frac
        return {k: float(v) for k, v in d.items()}


class Working:
    """Lazily derived rasters shared by the extractors for one image."""

    def __init__(self, image: ImageBuffer, consts: dict | None = None, upsample: bool = True):
        self.image = image
        self.c = consts or constants()
        self.rgb, self.scale = working_image(image, int(self.c["working_max_dim"]), upsample)

    @cached_property
    def lum(self) -> np.ndarray:
        return luminance_array(self.rgb)

    @cached_property
    def hsv(self) -> np.ndarray:
        return rgb_to_hsv_array(self.rgb)

    @cached_property
    def gradient(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return sobel(self.lum)


def sobel(lum: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sobel derivatives scaled so a luminance step of d reads d/2."""
    gx = ndimage.sobel(lum, axis=1, mode="reflect") / 8.0
    gy = ndimage.sobel(lum, axis=0, mode="reflect") / 8.0
    return gx, gy, np.hypot(gx, gy)


def laplacian_energy(lum: np.ndarray) -> np.ndarray:
    """Squared 4-neighbour Laplacian response per pixel."""
    return ndimage.laplace(lum, mode="reflect") ** 2


def _require(image: ImageBuffer, n: int, what: str) -> None:
    if image.width < n or image.height < n:
        raise ImageTooSmall(f"{what} needs at least {n}x{n} pixels, got {image.width}x{image.height}")


def _as_working(image) -> Working:
    return image if isinstance(image, Working) else Working(image)


def camera_shake(image: ImageBuffer | Working) -> float:
    """Blur amount in [0, 1]; 1 means no high-frequency energy at all."""
    w = _as_working(image)
    _require(w.image, 3, "camera_shake")
    s = float(laplacian_energy(w.lum).mean())
    c = float(w.c["shake_c"])
    return 1.0 - s / (s + c)


def contrast(image: ImageBuffer | Working) -> float:
    w = _as_working(image)
    sd = float(w.lum.std())
    # flat images give float dust, not a real spread
    return 0.0 if sd < 1e-12 else min(1.0, 2.0 * sd)


def channel_contrast(image: ImageBuffer | Working) -> tuple[float, float, float]:
    w = _as_working(image)
    sd = (w.rgb / 255.0).reshape(-1, 3).std(axis=0)
    return tuple(float(min(1.0, 2.0 * v)) for v in sd)


def order_complexity(image: ImageBuffer | Working) -> tuple[float, float, float]:
    """Histogram-entropy order, edge-fraction complexity and their ratio."""
    w = _as_working(image)
    _require(w.image, 8, "order_complexity")
    bins = int(w.c["order_bins"])
    idx = np.minimum((w.lum * bins).astype(np.int64), bins - 1)
    p = np.bincount(idx.ravel(), minlength=bins) / idx.size
    p = p[p > 0]
    entropy = float(-(p * np.log2(p)).sum())
    order = max(0.0, 1.0 - entropy / math.log2(bins))
    _, _, mag = w.gradient
    complexity = float((mag > w.c["edge_threshold"]).mean())
    return order, complexity, order / (complexity + float(w.c["birkhoff_eps"]))


def edge_density(image: ImageBuffer | Working) -> float:
    w = _as_working(image)
    _, _, mag = w.gradient
    return float(min(1.0, 2.0 * mag.mean()))


def _count_regions(rgb: np.ndarray, tau: float) -> int:
    h, w, _ = rgb.shape
    ids = np.arange(h * w).reshape(h, w)
    rows, cols = [], []
    dh = np.sqrt(((rgb[:, 1:] - rgb[:, :-1]) ** 2).sum(axis=-1)) <= tau
    dv = np.sqrt(((rgb[1:, :] - rgb[:-1, :]) ** 2).sum(axis=-1)) <= tau
    rows.append(ids[:, :-1][dh])
    cols.append(ids[:, 1:][dh])
    rows.append(ids[:-1, :][dv])
    cols.append(ids[1:, :][dv])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    graph = coo_matrix((np.ones(r.size, dtype=np.int8), (r, c)), shape=(h * w, h * w))
    n, _ = connected_components(graph, directed=False)
    return int(n)


def level_of_detail(image: ImageBuffer | Working) -> tuple[int, float]:
    """Region count after merging similar 4-neighbours, and count per working pixel."""
    w = _as_working(image)
    _require(w.image, 4, "level_of_detail")
    n = _count_regions(w.rgb, float(w.c["detail_tau"]))
    return n, n / (w.rgb.shape[0] * w.rgb.shape[1])


def symmetry(image: ImageBuffer | Working) -> float:
    """Left-right reflective symmetry of luminance, 1 for a mirror-invariant image."""
    w = _as_working(image)
    lum = w.lum
    width = lum.shape[1]
    half = width // 2
    # only the left half of pairs is summed so mirrored inputs give bit-identical sums
    d = np.abs(lum[:, :half] - lum[:, ::-1][:, :half])
    return float(1.0 - 2.0 * d.sum() / lum.size)


def _hough_grid(w: Working) -> np.ndarray:
    factor = max(1, int(w.c["working_max_dim"]) // int(w.c["hough_grid_max_dim"]))
    lum = w.lum
    h, wd = lum.shape[0] // factor, lum.shape[1] // factor
    grid = lum[: h * factor, : wd * factor].reshape(h, factor, wd, factor).mean(axis=(1, 3))
    # light smoothing straightens gradient directions along staircase edges
    return ndimage.gaussian_filter(grid, float(w.c["hough_smoothing"]))


N_PERIMETER_SAMPLES = 64


def _perimeter_support(cands: np.ndarray, radii: np.ndarray, edge: np.ndarray,
                       gx: np.ndarray, gy: np.ndarray, mag: np.ndarray, align: float) -> np.ndarray:
    """Fraction of perimeter angles backed by a radially oriented edge pixel.

    ``cands`` holds (radius index, y, x) rows. A sample angle counts when a
    pixel at radius r-1, r or r+1 along it is an edge whose gradient is within
    ``acos(align)`` of the radial direction.
    """
    gh, gw = edge.shape
    theta = np.arange(N_PERIMETER_SAMPLES) * (2.0 * np.pi / N_PERIMETER_SAMPLES)
    ct, st = np.cos(theta), np.sin(theta)
    r = radii[cands[:, 0]].astype(np.float64)
    cy = cands[:, 1].astype(np.float64)
    cx = cands[:, 2].astype(np.float64)
    supported = np.zeros((cands.shape[0], N_PERIMETER_SAMPLES), dtype=bool)
    for delta in (-1.0, 0.0, 1.0):
        rr = (r + delta)[:, None]
        px = np.rint(cx[:, None] + rr * ct[None, :]).astype(np.int64)
        py = np.rint(cy[:, None] + rr * st[None, :]).astype(np.int64)
        inside = (px >= 0) & (px < gw) & (py >= 0) & (py < gh)
        pxc = np.clip(px, 0, gw - 1)
        pyc = np.clip(py, 0, gh - 1)
        m = mag[pyc, pxc]
        cos_radial = np.abs(gx[pyc, pxc] * ct[None, :] + gy[pyc, pxc] * st[None, :]) / np.where(m > 0, m, 1.0)
        supported |= inside & edge[pyc, pxc] & (cos_radial >= align)
    return supported.mean(axis=1)


def detect_circles(image: ImageBuffer | Working, return_circles: bool = False):
    """Count circles with a gradient-direction Hough transform.

    Each edge pixel votes for centres along its gradient line (both senses)
    at every radius, so cost is O(edges x radii). Local maxima of the
    smoothed accumulator with enough votes per unit circumference become
    candidates; a candidate is kept when most of its perimeter is backed by
    radially oriented edges, which rejects straight edges and texture.
    Survivors are thinned by non-maximum suppression in centre and radius.
    """
    w = _as_working(image)
    _require(w.image, 16, "detect_circles")
    c = w.c
    grid = _hough_grid(w)
    gh, gw = grid.shape
    r_min = int(c["hough_min_radius"])
    r_max = int(min(gh, gw) // 3)
    found: list[tuple[float, float, float]] = []
    gx, gy, mag = sobel(grid)
    edge = mag > c["edge_threshold"]
    ys, xs = np.nonzero(edge)
    if r_max < r_min or ys.size == 0:
        return (0, found) if return_circles else 0
    ux = gx[ys, xs] / mag[ys, xs]
    uy = gy[ys, xs] / mag[ys, xs]
    radii = np.arange(r_min, r_max + 1)
    nr = radii.size

    lin_all = []
    for sign in (1.0, -1.0):
        cx = np.rint(xs[None, :] - sign * radii[:, None] * ux[None, :]).astype(np.int64)
        cy = np.rint(ys[None, :] - sign * radii[:, None] * uy[None, :]).astype(np.int64)
        ok = (cx >= 0) & (cx < gw) & (cy >= 0) & (cy < gh)
        lin = (np.arange(nr)[:, None] * gh + cy) * gw + cx
        lin_all.append(lin[ok])
    acc = np.bincount(np.concatenate(lin_all), minlength=nr * gh * gw).reshape(nr, gh, gw).astype(np.float64)
    score = ndimage.uniform_filter(acc, size=3, mode="constant") * 27.0 / (2.0 * np.pi * radii[:, None, None])
    nms_c = float(c["hough_nms_center"])
    nms_r = float(c["hough_nms_radius"])
    peak = ndimage.maximum_filter(score, size=(3, 3, 3), mode="constant")
    cands = np.argwhere((score >= float(c["hough_vote_fraction"])) & (score == peak))
    if cands.size == 0:
        return (0, found) if return_circles else 0
    support = _perimeter_support(cands, radii, edge, gx, gy, mag, float(c["hough_alignment"]))
    keep = support >= float(c["hough_perimeter_support"])
    cands, vals = cands[keep], score[tuple(cands[keep].T)]
    order = np.lexsort((cands[:, 2], cands[:, 1], cands[:, 0], -vals))
    for ri, yy, xx in cands[order]:
        rad = float(radii[ri])
        if any(math.hypot(xx - fx, yy - fy) <= nms_c and abs(rad - fr) <= nms_r for fx, fy, fr in found):
            continue
        found.append((float(xx), float(yy), rad))
    return (len(found), found) if return_circles else len(found)


def color_name_labels(hsv: np.ndarray, consts: dict | None = None) -> np.ndarray:
    """Index into :data:`COLOR_NAMES` for every pixel of an HSV array."""
    c = consts or constants()
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    idx = COLOR_NAMES.index
    out = np.full(h.shape, idx("red"), dtype=np.int64)
    out[(h >= 15) & (h < 45)] = idx("orange")
    out[(h >= 15) & (h < 45) & (v < c["color_brown_value"])] = idx("brown")
    out[(h >= 45) & (h < 70)] = idx("yellow")
    out[(h >= 70) & (h < 165)] = idx("green")
    out[(h >= 165) & (h < 260)] = idx("blue")
    out[(h >= 260) & (h < 300)] = idx("purple")
    out[(h >= 300) & (h < 345)] = idx("pink")
    achrom = s < c["color_achromatic_saturation"]
    out[achrom] = idx("gray")
    out[achrom & (v > c["color_white_value"])] = idx("white")
    out[v < c["color_black_value"]] = idx("black")
    return out


def color_names(image: ImageBuffer | Working) -> tuple[float, ...]:
    """Fraction of pixels carrying each of the 11 basic color names."""
    w = _as_working(image)
    labels = color_name_labels(w.hsv, w.c)
    counts = np.bincount(labels.ravel(), minlength=len(COLOR_NAMES))
    return tuple(float(x) for x in counts / counts.sum())


def hue_entropy(image: ImageBuffer | Working) -> float:
    """Normalised entropy of the saturation-weighted hue histogram of chromatic pixels."""
    w = _as_working(image)
    c = w.c
    bins = int(c["hue_entropy_bins"])
    h, s, v = w.hsv[..., 0], w.hsv[..., 1], w.hsv[..., 2]
    chromatic = (s >= c["color_achromatic_saturation"]) & (v >= c["color_black_value"])
    if not chromatic.any():
        return 0.0
    idx = np.minimum((h[chromatic] / 360.0 * bins).astype(np.int64), bins - 1)
    hist = np.bincount(idx, weights=s[chromatic], minlength=bins)
    p = hist / hist.sum()
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum() / math.log2(bins))


def saturation_std(image: ImageBuffer | Working) -> float:
    w = _as_working(image)
    return float(w.hsv[..., 1].std())


def extract_visual(image: ImageBuffer | Working) -> VisualFeatures:
    """Compute every face-independent feature from one shared working raster."""
    w = _as_working(image)
    order, complexity, ratio = order_complexity(w)
    regions, regions_norm = level_of_detail(w)
    cr, cg, cb = channel_contrast(w)
    return VisualFeatures(
        camera_shake=camera_shake(w),
        contrast=contrast(w),
        image_order=order,
        image_complexity=complexity,
        birkhoff_ratio=ratio,
        level_of_detail=regions,
        level_of_detail_normalized=regions_norm,
        symmetry=symmetry(w),
        circle_count=detect_circles(w),
        color_name_hist=color_names(w),
        contrast_red=cr,
        contrast_green=cg,
        contrast_blue=cb,
        edge_density=edge_density(w),
        hue_entropy=hue_entropy(w),
        saturation_std=saturation_std(w),
    )
