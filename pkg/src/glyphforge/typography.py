"""Typography plan data model, strict JSON contract, grid overlay and bbox geometry."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

from PIL import Image, ImageDraw

COLOR_NAMES = frozenset({
    "white", "black", "red", "blue", "green", "yellow", "orange",
    "brown", "gray", "gold", "silver", "purple", "pink",
})
FONT_WEIGHTS = frozenset({"light", "regular", "bold"})
ALIGNMENTS = frozenset({"left", "center", "right"})

GRID_COLOR = (255, 0, 0)

_HEX_RE = re.compile(r"^#[0-9A-Fa-f]{6}$")


class PlanError(ValueError):
    """Typography-plan validation failure; `path` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def validate(self, path: str = "bbox") -> None:
        for name in ("x_min", "y_min", "x_max", "y_max"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or math.isnan(v):
                raise PlanError(f"{path}.{name}", "must be a real number")
            if not 0.0 <= v <= 1.0:
                raise PlanError(f"{path}.{name}", f"out of range [0,1]: {v}")
        if self.x_min >= self.x_max:
            raise PlanError(path, f"x_min must be < x_max ({self.x_min} >= {self.x_max})")
        if self.y_min >= self.y_max:
            raise PlanError(path, f"y_min must be < y_max ({self.y_min} >= {self.y_max})")

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class TextRegion:
    content: str
    bbox: BBox
    font: str = "auto"
    font_weight: str = "regular"
    font_size_ratio: float = 0.8
    color: str = "black"
    is_latex: bool = False
    alignment: str = "center"
    rotation: float = 0.0

    def validate(self, path: str = "region") -> None:
        if not isinstance(self.content, str):
            raise PlanError(f"{path}.content", "must be a string")
        self.bbox.validate(f"{path}.bbox")
        if not isinstance(self.font, str) or not self.font:
            raise PlanError(f"{path}.font", "must be a non-empty string")
        if self.font_weight not in FONT_WEIGHTS:
            raise PlanError(f"{path}.font_weight", f"not one of {sorted(FONT_WEIGHTS)}: {self.font_weight!r}")
        if not isinstance(self.font_size_ratio, (int, float)) or not 0.1 <= self.font_size_ratio <= 1.0:
            raise PlanError(f"{path}.font_size_ratio", f"out of range [0.1,1.0]: {self.font_size_ratio}")
        if self.color not in COLOR_NAMES:
            raise PlanError(f"{path}.color", f"unknown color name: {self.color!r}")
        if not isinstance(self.is_latex, bool):
            raise PlanError(f"{path}.is_latex", "must be a boolean")
        if self.alignment not in ALIGNMENTS:
            raise PlanError(f"{path}.alignment", f"not one of {sorted(ALIGNMENTS)}: {self.alignment!r}")
        if not isinstance(self.rotation, (int, float)) or not -180.0 < self.rotation <= 180.0:
            raise PlanError(f"{path}.rotation", f"out of range (-180,180]: {self.rotation}")


@dataclass(frozen=True)
class ImageAnalysis:
    background_style: str = ""
    dominant_colors: tuple[str, ...] = ()
    text_style_hint: str = ""

    def validate(self, path: str = "image_analysis") -> None:
        if not isinstance(self.background_style, str):
            raise PlanError(f"{path}.background_style", "must be a string")
        if not isinstance(self.text_style_hint, str):
            raise PlanError(f"{path}.text_style_hint", "must be a string")
        for i, c in enumerate(self.dominant_colors):
            if not isinstance(c, str) or not _HEX_RE.match(c):
                raise PlanError(f"{path}.dominant_colors[{i}]", f"not a #RRGGBB value: {c!r}")


@dataclass(frozen=True)
class TypographyPlan:
    image_analysis: ImageAnalysis = field(default_factory=ImageAnalysis)
    text_regions: tuple[TextRegion, ...] = ()

    def validate(self) -> None:
        self.image_analysis.validate()
        for i, r in enumerate(self.text_regions):
            r.validate(f"text_regions[{i}]")


_REGION_FIELDS = {
    "content", "bbox", "font", "font_weight", "font_size_ratio",
    "color", "is_latex", "alignment", "rotation",
}
_ANALYSIS_FIELDS = {"background_style", "dominant_colors", "text_style_hint"}


def _reject_unknown(obj: dict, allowed: set[str], path: str) -> None:
    for key in obj:
        if key not in allowed:
            raise PlanError(f"{path}.{key}", "unknown field (strict contract)")


def _parse_bbox(raw, path: str) -> BBox:
    if not isinstance(raw, list) or len(raw) != 4:
        raise PlanError(path, "must be a 4-element list [x_min,y_min,x_max,y_max]")
    try:
        vals = [float(v) for v in raw]
    except (TypeError, ValueError):
        raise PlanError(path, "entries must be numbers") from None
    box = BBox(*vals)
    box.validate(path)
    return box


def _parse_region(raw, path: str) -> TextRegion:
    if not isinstance(raw, dict):
        raise PlanError(path, "must be an object")
    _reject_unknown(raw, _REGION_FIELDS, path)
    for required in ("content", "bbox"):
        if required not in raw:
            raise PlanError(f"{path}.{required}", "missing required field")
    region = TextRegion(
        content=raw["content"],
        bbox=_parse_bbox(raw["bbox"], f"{path}.bbox"),
        font=raw.get("font", "auto"),
        font_weight=raw.get("font_weight", "regular"),
        font_size_ratio=raw.get("font_size_ratio", 0.8),
        color=raw.get("color", "black"),
        is_latex=raw.get("is_latex", False),
        alignment=raw.get("alignment", "center"),
        rotation=raw.get("rotation", 0.0),
    )
    region.validate(path)
    return region


def parse_plan(json_text: str) -> TypographyPlan:
    """Parse and strictly validate a typography-plan JSON document."""
    try:
        raw = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise PlanError("$", f"malformed JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise PlanError("$", "top level must be an object")
    _reject_unknown(raw, {"image_analysis", "text_regions"}, "$")
    for required in ("image_analysis", "text_regions"):
        if required not in raw:
            raise PlanError(required, "missing required field")

    analysis_raw = raw["image_analysis"]
    if not isinstance(analysis_raw, dict):
        raise PlanError("image_analysis", "must be an object")
    _reject_unknown(analysis_raw, _ANALYSIS_FIELDS, "image_analysis")
    colors = analysis_raw.get("dominant_colors", [])
    if not isinstance(colors, list):
        raise PlanError("image_analysis.dominant_colors", "must be a list")
    analysis = ImageAnalysis(
        background_style=analysis_raw.get("background_style", ""),
        dominant_colors=tuple(colors),
        text_style_hint=analysis_raw.get("text_style_hint", ""),
    )
    analysis.validate()

    regions_raw = raw["text_regions"]
    if not isinstance(regions_raw, list):
        raise PlanError("text_regions", "must be a list")
    regions = tuple(
        _parse_region(r, f"text_regions[{i}]") for i, r in enumerate(regions_raw)
    )
    return TypographyPlan(image_analysis=analysis, text_regions=regions)


def serialize_plan(plan: TypographyPlan) -> str:
    doc = {
        "image_analysis": {
            "background_style": plan.image_analysis.background_style,
            "dominant_colors": list(plan.image_analysis.dominant_colors),
            "text_style_hint": plan.image_analysis.text_style_hint,
        },
        "text_regions": [
            {
                "content": r.content,
                "bbox": r.bbox.as_list(),
                "font": r.font,
                "font_weight": r.font_weight,
                "font_size_ratio": r.font_size_ratio,
                "color": r.color,
                "is_latex": r.is_latex,
                "alignment": r.alignment,
                "rotation": r.rotation,
            }
            for r in plan.text_regions
        ],
    }
    return json.dumps(doc, ensure_ascii=False, indent=2, sort_keys=True)


def bbox_iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two normalized boxes; 0 when disjoint."""
    ix = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    if inter == 0.0:
        return 0.0
    area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min)
    area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min)
    return inter / (area_a + area_b - inter)


def bbox_to_pixels(b: BBox, width: int, height: int) -> tuple[int, int, int, int]:
    """Half-open pixel rectangle (x0, y0, x1, y1) for a normalized box.

    Floor/ceil rounding, clamped to the image, guaranteed at least 1x1.
    """
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    x0 = min(max(math.floor(b.x_min * width), 0), width - 1)
    y0 = min(max(math.floor(b.y_min * height), 0), height - 1)
    x1 = min(max(math.ceil(b.x_max * width), x0 + 1), width)
    y1 = min(max(math.ceil(b.y_max * height), y0 + 1), height)
    return x0, y0, x1, y1


def grid_positions(extent: int, n: int) -> list[int]:
    """Pixel positions of the n+1 grid lines along an axis of `extent` pixels."""
    return [min(round(k / n * extent), extent - 1) for k in range(n + 1)]


def overlay_grid(image: Image.Image, n: int = 5) -> Image.Image:
    """Return a copy of `image` with red grid lines at {k/n} plus coordinate labels."""
    if n < 2:
        raise ValueError("grid density n must be >= 2")
    w, h = image.size
    if w == 0 or h == 0:
        raise ValueError("degenerate image (0 pixels)")
    out = image.convert("RGB")
    draw = ImageDraw.Draw(out)
    xs = grid_positions(w, n)
    ys = grid_positions(h, n)
    for k, x in enumerate(xs):
        draw.line([(x, 0), (x, h - 1)], fill=GRID_COLOR, width=1)
    for k, y in enumerate(ys):
        draw.line([(0, y), (w - 1, y)], fill=GRID_COLOR, width=1)
    for k, x in enumerate(xs):
        label = f"{k / n:.3f}"
        draw.text((min(x + 2, w - 1), 1), label, fill=GRID_COLOR)
    for k, y in enumerate(ys):
        label = f"{k / n:.3f}"
        draw.text((1, min(y + 2, h - 1)), label, fill=GRID_COLOR)
    return out
