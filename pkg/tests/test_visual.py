from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ambiance.errors import ImageTooSmall
from ambiance.imaging import ImageBuffer
from ambiance.registry import constants
from ambiance.synthetic import (
    add_noise,
    box_blur,
    checkerboard,
    circle_outlines,
    filled_disk,
    gray_noise,
    halves,
    horizontal_gradient,
    mirror,
    quadrants,
    rgb_noise,
    rotate180,
    solid,
    upscale2,
    vertical_stripes,
)
from ambiance.visual import (
    COLOR_NAMES,
    camera_shake,
    color_names,
    contrast,
    detect_circles,
    extract_visual,
    level_of_detail,
    order_complexity,
    symmetry,
)

THREE_CIRCLES = ((30, 30, 10), (85, 35, 15), (55, 90, 20))
images = st.builds(
    lambda h, w, seed: ImageBuffer(np.random.default_rng(seed).integers(0, 256, (h, w, 3))),
    st.integers(16, 40), st.integers(16, 40), st.integers(0, 2**31),
)


def hist(image) -> dict[str, float]:
    return dict(zip(COLOR_NAMES, color_names(image)))


# camera shake

def test_solid_image_is_fully_blurred():
    assert camera_shake(solid(32, 32, (128, 128, 128))) == 1.0


def test_blur_increases_shake_on_checkerboard():
    board = checkerboard(64, 64, 8)
    assert camera_shake(box_blur(board, 3)) > camera_shake(board)


def test_noise_is_sharper_than_blurred_noise():
    noise = gray_noise(64, 64, seed=1)
    assert camera_shake(noise) < camera_shake(box_blur(noise, 2))


def test_shake_needs_three_pixels():
    with pytest.raises(ImageTooSmall):
        camera_shake(solid(2, 2, (0, 0, 0)))


@given(images, st.integers(1, 4))
def test_blur_never_reduces_shake(img, radius):
    if np.ptp(img.pixels) == 0:
        return
    assert camera_shake(box_blur(img, radius)) >= camera_shake(img) - 1e-12


# contrast

def test_contrast_examples():
    assert contrast(solid(20, 20, (90, 10, 200))) == 0.0
    assert contrast(halves(20, 20, (0, 0, 0), (255, 255, 255))) == pytest.approx(1.0)
    assert contrast(horizontal_gradient(256, 8)) == pytest.approx(2 / math.sqrt(12), abs=0.005)


# order and complexity

def test_solid_has_full_order():
    order, cplx, ratio = order_complexity(solid(32, 32, (70, 70, 70)))
    assert (order, cplx) == (1.0, 0.0)
    assert ratio == pytest.approx(1000.0)


def test_uniform_noise_has_no_order():
    rng = np.random.default_rng(3)
    # luminance uniform over all 64 bins: gray levels drawn uniformly
    lv = rng.integers(0, 256, (256, 256))
    img = ImageBuffer(np.repeat(lv[:, :, None], 3, axis=2))
    order, cplx, _ = order_complexity(img)
    assert order == pytest.approx(0.0, abs=0.02)
    # pixel-wise independent noise is the most edge-dense input the detector sees
    assert cplx > 0.8
    assert cplx > order_complexity(checkerboard(64, 64, 8))[1]


def test_two_tone_order():
    img = halves(64, 64, (0, 0, 0), (255, 255, 255))
    order, cplx, ratio = order_complexity(img)
    assert order == pytest.approx(1 - 1 / math.log2(64), abs=1e-9)
    assert 0.0 < cplx < 0.05
    assert ratio == pytest.approx(order / (cplx + 1e-3))


def test_order_weakly_decreases_with_noise():
    base = halves(64, 64, (40, 40, 40), (200, 200, 200))
    orders = [order_complexity(add_noise(base, a, seed=5))[0] for a in (0, 8, 32, 96)]
    assert all(a >= b - 1e-9 for a, b in zip(orders, orders[1:]))


def test_order_needs_eight_pixels():
    with pytest.raises(ImageTooSmall):
        order_complexity(solid(7, 7, (0, 0, 0)))


# level of detail

def test_level_of_detail_examples():
    assert level_of_detail(solid(16, 16, (5, 5, 5)))[0] == 1
    colors = ((255, 0, 0), (0, 255, 0), (0, 0, 255), (255, 255, 0))
    assert level_of_detail(quadrants(32, 32, colors))[0] == 4
    assert level_of_detail(vertical_stripes(10, 10, 1))[0] == 10


def test_level_of_detail_needs_four_pixels():
    with pytest.raises(ImageTooSmall):
        level_of_detail(solid(3, 3, (0, 0, 0)))


# symmetry

def test_symmetry_examples():
    img = rgb_noise(31, 17, seed=2)
    sym = ImageBuffer(np.concatenate([img.pixels, img.pixels[:, ::-1]], axis=1))
    assert symmetry(sym) == 1.0
    assert symmetry(halves(20, 10, (0, 0, 0), (255, 255, 255))) == 0.0


def test_symmetry_of_noise_matches_expectation():
    rng = np.random.default_rng(4)
    lv = rng.random((200, 200))
    img = ImageBuffer(np.repeat(np.rint(lv * 255)[:, :, None], 3, axis=2))
    assert symmetry(img) == pytest.approx(2 / 3, abs=0.01)


@given(images)
def test_symmetry_is_mirror_invariant(img):
    assert symmetry(img) == symmetry(mirror(img))


# circles

def test_circle_examples():
    assert detect_circles(solid(64, 64, (200, 200, 200))) == 0
    assert detect_circles(circle_outlines(128, 128, THREE_CIRCLES)) == 3
    assert detect_circles(filled_disk(64, 64, 32, 32, 12)) >= 1


def test_circles_need_sixteen_pixels():
    with pytest.raises(ImageTooSmall):
        detect_circles(solid(15, 15, (0, 0, 0)))


def test_circle_positions_recovered():
    n, found = detect_circles(circle_outlines(128, 128, THREE_CIRCLES), return_circles=True)
    assert n == 3
    for cx, cy, r in THREE_CIRCLES:
        assert any(abs(fx - cx) <= 3 and abs(fy - cy) <= 3 and abs(fr - r) <= 3 for fx, fy, fr, *_ in found)


def test_no_circles_in_checkerboard():
    assert detect_circles(checkerboard(96, 96, 12)) == 0


# color names

def test_color_name_examples():
    assert hist(solid(8, 8, (255, 0, 0)))["red"] == 1.0
    assert hist(solid(8, 8, (128, 128, 128)))["gray"] == 1.0
    h = hist(halves(16, 16, (0, 0, 255), (255, 255, 0)))
    assert h["blue"] == pytest.approx(0.5) and h["yellow"] == pytest.approx(0.5)


@pytest.mark.parametrize("rgb,name", [
    ((255, 0, 0), "red"), ((0, 255, 0), "green"), ((0, 0, 255), "blue"),
    ((255, 255, 0), "yellow"), ((0, 0, 0), "black"), ((255, 255, 255), "white"),
    ((255, 128, 0), "orange"), ((120, 60, 0), "brown"), ((160, 0, 255), "purple"), ((255, 0, 160), "pink"),
])
def test_pure_colors_land_in_their_bin(rgb, name):
    assert hist(solid(8, 8, rgb))[name] >= 0.99


@given(images)
def test_color_names_is_rotation_invariant_distribution(img):
    h = np.array(color_names(img))
    assert h.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(h >= 0)
    assert np.allclose(h, color_names(rotate180(img)), atol=1e-12)


# whole-vector properties

def _fixtures():
    return [
        checkerboard(48, 48, 8), circle_outlines(128, 128, THREE_CIRCLES), rgb_noise(40, 30, seed=7),
        halves(50, 40, (10, 200, 30), (200, 20, 90)), horizontal_gradient(64, 32),
    ]


@pytest.mark.parametrize("idx", range(5))
def test_features_stable_under_2x_upscale(idx):
    img = _fixtures()[idx]
    a, b = extract_visual(img), extract_visual(upscale2(img))
    da, db = a.as_feature_dict(), b.as_feature_dict()
    for k in da:
        if k == "level_of_detail":
            assert a.level_of_detail_normalized == pytest.approx(b.level_of_detail_normalized, abs=0.05)
        elif k == "birkhoff_ratio":
            assert da[k] == pytest.approx(db[k], rel=0.05, abs=0.05)
        elif k == "circle_count":
            assert da[k] == db[k]
        else:
            assert da[k] == pytest.approx(db[k], abs=0.05), k


@given(images)
def test_visual_features_within_ranges(img):
    v = extract_visual(img)
    for name in ("camera_shake", "contrast", "image_order", "image_complexity", "symmetry",
                 "level_of_detail_normalized", "edge_density", "hue_entropy"):
        assert 0.0 <= getattr(v, name) <= 1.0, name
    assert v.birkhoff_ratio >= 0 and v.level_of_detail >= 1 and v.circle_count >= 0
    assert sum(v.color_name_hist) == pytest.approx(1.0, abs=1e-9)


def test_constants_come_from_manifest():
    c = constants()
    for key in ("shake_c", "working_max_dim"):
        assert key in c
