"""Training-free glyph-injection engine and evaluation toolkit."""

__version__ = "0.1.0"

from .typography import BBox, TextRegion, TypographyPlan, bbox_iou, parse_plan
from .renderer import GlyphTemplate, render_template
from .segmentation import PixelMask, TokenMask, otsu_threshold
from .diffusion import LatentGrid, NoiseSchedule, ToyDenoiser, ToyVae, make_schedule
from .injection import InjectionConfig, IndexSets, run_injection
from .metrics import TextPair, levenshtein, ocr_acc, ocr_ned

__all__ = [
    "BBox", "TextRegion", "TypographyPlan", "bbox_iou", "parse_plan",
    "GlyphTemplate", "render_template",
    "PixelMask", "TokenMask", "otsu_threshold",
    "LatentGrid", "NoiseSchedule", "ToyDenoiser", "ToyVae", "make_schedule",
    "InjectionConfig", "IndexSets", "run_injection",
    "TextPair", "levenshtein", "ocr_acc", "ocr_ned",
]
