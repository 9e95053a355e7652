import numpy as np
import pytest
from hypothesis import given, strategies as st
from PIL import Image

from glyphforge.typography import (
    BBox,
    PlanError,
    bbox_iou,
    bbox_to_pixels,
    grid_positions,
    overlay_grid,
    parse_plan,
    serialize_plan,
)

MINIMAL_PLAN = """
{
  "image_analysis": {"background_style": "slate", "dominant_colors": ["#112233"], "text_style_hint": "chalk"},
  "text_regions": [{"content": "HI", "bbox": [0.1, 0.1, 0.9, 0.3]}]
}
"""


def test_parse_minimal_plan_roundtrip():
    plan = parse_plan(MINIMAL_PLAN)
    assert len(plan.text_regions) == 1
    assert plan.text_regions[0].bbox == BBox(0.1, 0.1, 0.9, 0.3)
    assert parse_plan(serialize_plan(plan)) == plan


def test_font_size_ratio_error_names_path():
    bad = MINIMAL_PLAN.replace('"bbox": [0.1, 0.1, 0.9, 0.3]',
                               '"bbox": [0.1, 0.1, 0.9, 0.3], "font_size_ratio": 1.5')
    with pytest.raises(PlanError) as exc:
        parse_plan(bad)
    assert exc.value.path == "text_regions[0].font_size_ratio"


def test_inverted_bbox_rejected():
    bad = MINIMAL_PLAN.replace("[0.1, 0.1, 0.9, 0.3]", "[0.5, 0.1, 0.4, 0.3]")
    with pytest.raises(PlanError, match="x_min must be < x_max"):
        parse_plan(bad)


def test_unknown_field_rejected():
    bad = MINIMAL_PLAN.replace('"content": "HI"', '"content": "HI", "mystery": 1')
    with pytest.raises(PlanError, match="unknown field"):
        parse_plan(bad)


def test_malformed_json():
    with pytest.raises(PlanError, match="malformed JSON"):
        parse_plan("{not json")


def test_bad_hex_color_named():
    bad = MINIMAL_PLAN.replace('"#112233"', '"112233"')
    with pytest.raises(PlanError) as exc:
        parse_plan(bad)
    assert "dominant_colors[0]" in exc.value.path


def test_iou_identity():
    a = BBox(0.1, 0.2, 0.6, 0.8)
    assert bbox_iou(a, a) == 1.0


def test_iou_disjoint():
    assert bbox_iou(BBox(0, 0, 0.5, 0.5), BBox(0.6, 0.6, 1, 1)) == 0.0


def test_iou_known_overlap():
    # inter = 0.25^2 = 0.0625, union = 2*0.25 - 0.0625 = 0.4375 -> 1/7
    got = bbox_iou(BBox(0, 0, 0.5, 0.5), BBox(0.25, 0.25, 0.75, 0.75))
    assert got == pytest.approx(1 / 7, abs=1e-12)


@st.composite
def boxes(draw):
    x0 = draw(st.floats(0, 0.9))
    y0 = draw(st.floats(0, 0.9))
    x1 = draw(st.floats(min_value=x0 + 0.01, max_value=1.0))
    y1 = draw(st.floats(min_value=y0 + 0.01, max_value=1.0))
    return BBox(x0, y0, x1, y1)


@given(boxes(), boxes())
def test_iou_symmetric_and_bounded(a, b):
    ab = bbox_iou(a, b)
    assert ab == pytest.approx(bbox_iou(b, a), abs=1e-12)
    assert 0.0 <= ab <= 1.0 + 1e-12


def test_bbox_to_pixels_full_frame():
    assert bbox_to_pixels(BBox(0, 0, 1, 1), 64, 64) == (0, 0, 64, 64)


def test_bbox_to_pixels_floor_ceil():
    assert bbox_to_pixels(BBox(0.25, 0.25, 0.75, 0.75), 8, 8) == (2, 2, 6, 6)


def test_bbox_to_pixels_minimum_one_pixel():
    assert bbox_to_pixels(BBox(0.0, 0.0, 0.001, 0.001), 4, 4) == (0, 0, 1, 1)


def test_grid_positions_n5():
    assert grid_positions(100, 5) == [0, 20, 40, 60, 80, 99]


def test_grid_positions_clamped_oracle():
    assert grid_positions(100, 5) == [min(round(k / 5 * 100), 99) for k in range(6)]


def test_overlay_grid_line_count_and_dims():
    img = Image.new("RGB", (50, 40), (200, 200, 200))
    out = overlay_grid(img, n=2)
    assert out.size == img.size
    arr = np.asarray(out)
    red = (arr[:, :, 0] == 255) & (arr[:, :, 1] == 0) & (arr[:, :, 2] == 0)
    # 3 full columns and 3 full rows of red
    full_cols = np.flatnonzero(red.all(axis=0))
    full_rows = np.flatnonzero(red.all(axis=1))
    assert len(full_cols) == 3
    assert len(full_rows) == 3


def test_overlay_grid_source_unmodified():
    img = Image.new("RGB", (30, 30), (10, 10, 10))
    before = np.asarray(img).copy()
    overlay_grid(img, n=5)
    assert np.array_equal(np.asarray(img), before)


def test_overlay_grid_pixel_budget():
    w = h = 100
    n = 5
    img = Image.new("RGB", (w, h), (7, 7, 7))
    out = np.asarray(overlay_grid(img, n))
    untouched = (out == 7).all(axis=2).sum()
    assert untouched >= (1 - 2 * (n + 1) * (w + h) / (w * h)) * w * h


def test_overlay_grid_rejects_small_n():
    with pytest.raises(ValueError):
        overlay_grid(Image.new("RGB", (10, 10)), n=1)
