import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glyphforge.segmentation import (
    PixelMask,
    SegmentationError,
    binarize,
    downsample_mask,
    otsu_threshold,
)


def brute_otsu(img):
    """Direct between-class variance search, no cumulative-sum tricks."""
    hist = np.bincount(img.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    best_t, best_var = 0, -1.0
    for t in range(256):
        w0 = hist[: t + 1].sum()
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        m0 = (hist[: t + 1] * np.arange(t + 1)).sum() / w0
        m1 = (hist[t + 1 :] * np.arange(t + 1, 256)).sum() / w1
        var = w0 * w1 * (m0 - m1) ** 2
        if var > best_var + 1e-15:
            best_var, best_t = var, t
    return best_t


def test_otsu_two_level():
    img = np.array([[10, 10, 200], [200, 10, 200]], dtype=np.uint8)
    t = otsu_threshold(img)
    assert 10 <= t < 200
    assert t == brute_otsu(img)


def test_otsu_constant_image_error():
    with pytest.raises(SegmentationError):
        otsu_threshold(np.full((4, 4), 7, dtype=np.uint8))


def test_otsu_matches_brute_force_random():
    rng = np.random.default_rng(42)
    for _ in range(30):
        lo = rng.integers(0, 100)
        hi = rng.integers(150, 256)
        img = np.where(rng.random((16, 16)) < 0.4, lo, hi).astype(np.uint8)
        img = np.clip(img.astype(int) + rng.integers(-8, 9, img.shape), 0, 255)
        img = img.astype(np.uint8)
        if img.min() == img.max():
            continue
        assert otsu_threshold(img) == brute_otsu(img)


def test_binarize_dark_glyph_on_light():
    img = np.full((8, 8), 240, dtype=np.uint8)
    img[2:6, 2:6] = 20
    mask = binarize(img, otsu_threshold(img))
    assert not mask.degenerate
    assert mask.bits[3, 3]
    assert not mask.bits[0, 0]


def test_binarize_light_glyph_on_dark():
    img = np.full((8, 8), 15, dtype=np.uint8)
    img[2:6, 2:6] = 235
    mask = binarize(img, otsu_threshold(img))
    assert mask.bits[3, 3]
    assert not mask.bits[0, 0]


def test_binarize_degenerate():
    mask = binarize(np.full((4, 4), 128, dtype=np.uint8), 128)
    assert mask.degenerate
    assert not mask.bits.any()


def test_binarize_explicit_background():
    img = np.full((4, 4), 200, dtype=np.uint8)
    img[1, 1] = 30
    # tell it the background really is dark: the bright class becomes glyph
    mask = binarize(img, 100, background=0.0)
    assert mask.bits[0, 0]
    assert not mask.bits[1, 1]


def test_downsample_full_block():
    bits = np.zeros((8, 8), dtype=bool)
    bits[0:4, 0:4] = True
    tm = downsample_mask(PixelMask(bits), patch=4)
    assert tm.grid.shape == (2, 2)
    assert tm.grid[0, 0]
    assert tm.grid.sum() == 1


def test_downsample_threshold_edges():
    bits = np.zeros((4, 8), dtype=bool)
    bits[0, 0:4] = True  # 4/16 = 0.25 occupancy in left patch
    tm = downsample_mask(PixelMask(bits), patch=4, coverage=0.25)
    assert tm.grid[0, 0]  # mean >= coverage passes
    bits[0, 3] = False  # 3/16 < 0.25
    tm = downsample_mask(PixelMask(bits), patch=4, coverage=0.25)
    assert not tm.grid[0, 0]


def test_downsample_pads_with_background():
    bits = np.ones((5, 5), dtype=bool)
    tm = downsample_mask(PixelMask(bits), patch=4, coverage=0.25)
    assert tm.grid.shape == (2, 2)
    # corner patch holds a single true pixel out of 16
    assert not tm.grid[1, 1]


def test_token_index_partition():
    bits = np.zeros((8, 8), dtype=bool)
    bits[0:4, 4:8] = True
    tm = downsample_mask(PixelMask(bits), patch=4)
    assert list(tm.covered_indices()) == [1]
    assert list(tm.uncovered_indices()) == [0, 2, 3]
    assert tm.to_bitstring() == "0100"


def test_downsample_bad_patch():
    with pytest.raises(SegmentationError):
        downsample_mask(PixelMask(np.ones((4, 4), dtype=bool)), patch=0)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_otsu_property_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 256, (8, 8)).astype(np.uint8)
    if img.min() == img.max():
        return
    assert otsu_threshold(img) == brute_otsu(img)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_downsample_grid_shape(seed):
    rng = np.random.default_rng(seed)
    h = int(rng.integers(1, 20))
    w = int(rng.integers(1, 20))
    bits = rng.random((h, w)) > 0.5
    tm = downsample_mask(PixelMask(bits), patch=4)
    assert tm.grid.shape == (-(-h // 4), -(-w // 4))
