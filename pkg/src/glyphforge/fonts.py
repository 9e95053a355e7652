"""Font registry and deterministic rasterization primitives.

Ships a built-in synthetic monospace font ("blockmono") so rendering is fully
deterministic and self-contained; TrueType fonts can be registered from a TOML
config for nicer output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

try:
    from PIL import ImageFont
except ImportError:  # pragma: no cover
    ImageFont = None


class FontError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticMonoFont:
    """Procedural monospace bitmap font with exact, known metrics.

    Every codepoint gets a deterministic 3x5 block pattern derived from a
    multiplicative hash; advance width is exactly ``round(advance_ratio * size)``.
    """

    advance_ratio: float = 0.6
    name: str = "blockmono"

    def advance(self, ch: str, size_px: int) -> int:
        return max(1, round(self.advance_ratio * size_px))

    def line_height(self, size_px: int) -> int:
        return max(1, size_px)

    def measure(self, text: str, size_px: int) -> int:
        return sum(self.advance(c, size_px) for c in text)

    def _pattern(self, ch: str) -> np.ndarray:
        cp = ord(ch)
        bits = (cp * 2654435761 + 0x9E3779B9) & 0x7FFF
        cells = np.array([(bits >> i) & 1 for i in range(15)], dtype=bool)
        if not cells.any():
            cells[cp % 15] = True
        return cells.reshape(5, 3)

    def render_line(self, text: str, size_px: int, weight: str = "regular") -> np.ndarray:
        """Render one line as a (line_height, width) uint8 alpha array (glyph=255)."""
        height = self.line_height(size_px)
        adv = self.advance("x", size_px)
        out = np.zeros((height, adv * len(text)), dtype=np.uint8)
        # cell geometry: glyph body occupies the upper ~5/6, 1px side bearing
        cell_w = max(1, adv - 2) if adv > 2 else adv
        cell_h = max(1, height - max(1, height // 6))
        bw = max(1, cell_w // 3)
        bh = max(1, cell_h // 5)
        for idx, ch in enumerate(text):
            if ch.isspace():
                continue
            pat = self._pattern(ch)
            x_off = idx * adv + (1 if adv > 2 else 0)
            for r in range(5):
                for c in range(3):
                    if not pat[r, c]:
                        continue
                    y0, x0 = r * bh, x_off + c * bw
                    y1 = min(y0 + bh, height)
                    x1 = min(x0 + bw, idx * adv + adv)
                    out[y0:y1, x0:x1] = 255
            if weight == "bold":
                col = out[:, idx * adv:(idx + 1) * adv]
                thick = col.copy()
                thick[:, 1:] |= col[:, :-1]
                out[:, idx * adv:(idx + 1) * adv] = thick
        return out


class TrueTypeFont:
    """FreeType-rasterized font loaded from a .ttf/.otf file."""

    def __init__(self, path: str, name: str):
        if ImageFont is None:  # pragma: no cover
            raise FontError("Pillow is required for TrueType fonts")
        self.path = path
        self.name = name
        self._cache: dict[int, ImageFont.FreeTypeFont] = {}

    def _at(self, size_px: int):
        if size_px not in self._cache:
            self._cache[size_px] = ImageFont.truetype(self.path, size_px)
        return self._cache[size_px]

    def advance(self, ch: str, size_px: int) -> int:
        return max(1, round(self._at(size_px).getlength(ch)))

    def line_height(self, size_px: int) -> int:
        ascent, descent = self._at(size_px).getmetrics()
        return ascent + descent

    def measure(self, text: str, size_px: int) -> int:
        return max(1, round(self._at(size_px).getlength(text))) if text else 0

    def render_line(self, text: str, size_px: int, weight: str = "regular") -> np.ndarray:
        from PIL import Image, ImageDraw

        font = self._at(size_px)
        width = max(1, self.measure(text, size_px))
        height = self.line_height(size_px)
        img = Image.new("L", (width, height), 0)
        draw = ImageDraw.Draw(img)
        draw.text((0, 0), text, fill=255, font=font)
        return np.asarray(img, dtype=np.uint8)


class FontRegistry:
    """Immutable-after-construction map of font-id to rasterizer."""

    def __init__(self, default: str = "blockmono"):
        self._fonts: dict[str, object] = {"blockmono": SyntheticMonoFont()}
        self._default = default

    def register(self, name: str, font) -> None:
        self._fonts[name] = font

    def resolve(self, font_id: str):
        if font_id == "auto":
            font_id = self._default
        try:
            return self._fonts[font_id]
        except KeyError:
            raise FontError(f"unknown font id: {font_id!r}") from None

    def names(self) -> list[str]:
        return sorted(self._fonts)

    @classmethod
    def from_config(cls, path: str) -> "FontRegistry":
        """Load extra TrueType fonts from a TOML file: [fonts] name = "path.ttf"."""
        try:
            import tomllib
        except ModuleNotFoundError:  # Python 3.10
            import tomli as tomllib  # type: ignore[no-redef]
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
        reg = cls(default=cfg.get("default", "blockmono"))
        for name, font_path in cfg.get("fonts", {}).items():
            reg.register(name, TrueTypeFont(font_path, name))
        return reg


def default_registry() -> FontRegistry:
    return FontRegistry()
