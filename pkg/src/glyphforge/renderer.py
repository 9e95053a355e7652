"""Glyph template renderer: math detection, unicode-to-LaTeX conversion,
line breaking, backend dispatch, vertical composition and rotation."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .fonts import FontRegistry, default_registry
from .typography import TextRegion, bbox_to_pixels

log = logging.getLogger(__name__)

BACKGROUND = 255  # template canvas fill; dark glyph on white keeps Otsu bimodal
LINE_GAP_RATIO = 0.2


class RenderError(ValueError):
    pass


def _load_conversion_table() -> dict[str, str]:
    table = {}
    data = resources.files("glyphforge").joinpath("data/unicode_latex.tsv").read_text("utf-8")
    for line in data.splitlines():
        if not line.strip():
            continue
        symbol, latex = line.split("\t")
        table[symbol] = latex
    return table


CONVERSION_TABLE = _load_conversion_table()

_MATH_MARKERS = set("=^_\\") | set(CONVERSION_TABLE)
_FRAC_RE = re.compile(r"\\[A-Za-z]+|[a-zA-Z0-9]/[a-zA-Z0-9]")


def detect_math(content: str) -> bool:
    """Heuristic: math marker present and at least one adjacent non-space pair."""
    if not any(ch in _MATH_MARKERS for ch in content) and not _FRAC_RE.search(content):
        return False
    return len(content.replace(" ", "")) >= 2


def unicode_to_latex(content: str) -> str:
    """Replace table symbols with LaTeX forms; unknown characters pass through."""
    return "".join(CONVERSION_TABLE.get(ch, ch) for ch in content)


def break_lines(content: str, box_width_px: int, font, size_px: int) -> list[str]:
    """Greedy line breaking: prefer whitespace breaks, fall back to mid-token."""
    min_advance = min((font.advance(c, size_px) for c in content if not c.isspace()),
                      default=font.advance("x", size_px))
    if box_width_px < min_advance:
        raise RenderError(f"box width {box_width_px}px narrower than one glyph ({min_advance}px)")

    def fits(s: str) -> bool:
        return font.measure(s, size_px) <= box_width_px

    def split_token(tok: str) -> list[str]:
        pieces, cur = [], ""
        for ch in tok:
            if cur and not fits(cur + ch):
                pieces.append(cur)
                cur = ch
            else:
                cur += ch
        if cur:
            pieces.append(cur)
        return pieces

    lines: list[str] = []
    current = ""
    for word in content.split():
        candidate = f"{current} {word}" if current else word
        if fits(candidate):
            current = candidate
            continue
        if current:
            lines.append(current)
            current = ""
        if fits(word):
            current = word
        else:
            pieces = split_token(word)
            lines.extend(pieces[:-1])
            current = pieces[-1]
    if current:
        lines.append(current)
    return lines or [""]


@dataclass(frozen=True)
class RenderBackend:
    """Capability-dispatched line renderer."""

    capability: str  # "structured-math" or "plain-text"
    available: bool = True

    def render(self, line: str, font, size_px: int, weight: str) -> np.ndarray:
        if not self.available:
            raise RenderError(f"backend {self.capability} unavailable")
        return font.render_line(line, size_px, weight)


PLAIN_TEXT_BACKEND = RenderBackend("plain-text", available=True)
STRUCTURED_MATH_BACKEND = RenderBackend("structured-math", available=True)


def render_line(line: str, font, size_px: int, weight: str, backend: RenderBackend) -> np.ndarray:
    """Deterministic raster of one line as a uint8 alpha array (glyph=255)."""
    if not line:
        raise RenderError("empty line: zero-width canvas")
    return backend.render(line, font, size_px, weight)


def compose_lines(line_images: list[np.ndarray], alignment: str = "left") -> np.ndarray:
    """Vertically stack line rasters with a fixed inter-line gap."""
    if not line_images:
        raise RenderError("no line images to compose")
    if len(line_images) == 1:
        return line_images[0]
    width = max(img.shape[1] for img in line_images)
    line_h = max(img.shape[0] for img in line_images)
    gap = round(LINE_GAP_RATIO * line_h)
    total_h = sum(img.shape[0] for img in line_images) + gap * (len(line_images) - 1)
    out = np.zeros((total_h, width), dtype=np.uint8)
    y = 0
    for img in line_images:
        h, w = img.shape
        if alignment == "left":
            x = 0
        elif alignment == "center":
            x = (width - w) // 2
        else:
            x = width - w
        out[y:y + h, x:x + w] = img
        y += h + gap
    return out


def _reflect_indices(n: int, r: int) -> np.ndarray:
    """Reflected (mirror, no edge repeat) index row for padding by r on each side."""
    idx = np.arange(-r, n + r)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.abs(idx) % period
    return np.where(idx >= n, period - idx, idx)


def rotate_canvas(img: np.ndarray, degrees: float, binary: bool = False) -> np.ndarray:
    """Rotate about the center, expanding the canvas to bound the content.

    Background fill is zero.  Multiples of 90 degrees are exact; other angles
    use bilinear sampling (nearest when `binary`, keeping masks binary).
    """
    deg = degrees % 360.0
    if deg == 0.0:
        return img.copy()
    if deg in (90.0, 180.0, 270.0):
        return np.ascontiguousarray(np.rot90(img, k=int(deg // 90)))

    h, w = img.shape
    theta = math.radians(deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    out_w = math.ceil(w * abs(cos_t) + h * abs(sin_t))
    out_h = math.ceil(w * abs(sin_t) + h * abs(cos_t))
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ocy, ocx = (out_h - 1) / 2.0, (out_w - 1) / 2.0

    yy, xx = np.meshgrid(np.arange(out_h), np.arange(out_w), indexing="ij")
    dx, dy = xx - ocx, yy - ocy
    # inverse map (rotation by -theta), image y axis points down
    sx = cos_t * dx - sin_t * dy + cx
    sy = sin_t * dx + cos_t * dy + cy

    if binary:
        ix = np.round(sx).astype(int)
        iy = np.round(sy).astype(int)
        valid = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
        out = np.zeros((out_h, out_w), dtype=img.dtype)
        out[valid] = img[iy[valid], ix[valid]]
        return out

    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    fx, fy = sx - x0, sy - y0
    acc = np.zeros((out_h, out_w), dtype=np.float64)
    for oy, wy in ((0, 1 - fy), (1, fy)):
        for ox, wx in ((0, 1 - fx), (1, fx)):
            px = x0 + ox
            py = y0 + oy
            valid = (px >= 0) & (px < w) & (py >= 0) & (py < h)
            weight = wx * wy
            vals = np.zeros_like(acc)
            vals[valid] = img[py[valid], px[valid]]
            acc += weight * vals
    return np.clip(np.round(acc), 0, 255).astype(img.dtype)


@dataclass
class GlyphTemplate:
    """Rendered glyph canvas: dark strokes on white, plus its binary foreground mask."""

    image: np.ndarray  # uint8 (H, W), glyph dark on BACKGROUND
    mask: np.ndarray   # bool (H, W), True on glyph strokes
    region: TextRegion
    lines: list[str]
    fallback_used: bool = False
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.image.shape != self.mask.shape:
            raise RenderError("image and mask dimensions differ")


def render_template(
    region: TextRegion,
    canvas_w: int,
    canvas_h: int,
    registry: FontRegistry | None = None,
    structured_backend: RenderBackend = STRUCTURED_MATH_BACKEND,
) -> GlyphTemplate:
    """Full pipeline: detect math, convert, break, render, compose, rotate, paste."""
    if not region.content:
        raise RenderError("empty region content")
    registry = registry or default_registry()
    font = registry.resolve(region.font)

    content = region.content
    fallback = False
    is_math = region.is_latex or detect_math(content)
    if is_math:
        content = unicode_to_latex(content)
        if structured_backend.available:
            backend = structured_backend
        else:
            backend = PLAIN_TEXT_BACKEND
            fallback = True
            log.warning("structured-math backend unavailable; plain-text fallback for %r",
                        region.content)
    else:
        backend = PLAIN_TEXT_BACKEND

    x0, y0, x1, y1 = bbox_to_pixels(region.bbox, canvas_w, canvas_h)
    box_w, box_h = x1 - x0, y1 - y0
    size_px = max(1, round(region.font_size_ratio * box_h))

    lines = break_lines(content, box_w, font, size_px)
    line_imgs = [render_line(ln, font, size_px, region.font_weight, backend)
                 for ln in lines if ln]
    if not line_imgs:
        raise RenderError("no renderable content")
    block = compose_lines(line_imgs, region.alignment)
    if region.rotation:
        block = rotate_canvas(block, region.rotation, binary=False)

    # paste into the bbox rectangle, clipping overflow so containment holds
    alpha = np.zeros((canvas_h, canvas_w), dtype=np.uint8)
    bh, bw = block.shape
    if region.alignment == "left":
        px = x0
    elif region.alignment == "center":
        px = x0 + max(0, (box_w - bw) // 2)
    else:
        px = x0 + max(0, box_w - bw)
    py = y0 + max(0, (box_h - bh) // 2)
    src_h = min(bh, y1 - py)
    src_w = min(bw, x1 - px)
    if src_h > 0 and src_w > 0:
        alpha[py:py + src_h, px:px + src_w] = block[:src_h, :src_w]

    mask = alpha > 127
    image = np.full((canvas_h, canvas_w), BACKGROUND, dtype=np.uint8)
    image[mask] = 0
    return GlyphTemplate(image=image, mask=mask, region=region, lines=lines,
                         fallback_used=fallback)
