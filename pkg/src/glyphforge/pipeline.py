"""Four-stage orchestration: extraction, draft preview + plan, glyph injection,
style refinement.  Every intermediate is persisted under a run directory."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .bench import BenchSample
from .diffusion import ToyDenoiser, ToyVae
from .injection import InjectionConfig, run_injection
from .refinement import DEFAULT_MAX_ROUNDS, refine_loop
from .renderer import GlyphTemplate, render_template
from .segmentation import PixelMask
from .typography import TypographyPlan, overlay_grid, parse_plan, serialize_plan
from .vlm import (
    MockVlmBackend,
    extract_quoted_text,
    get_template,
    message_digest,
    parse_scalar_reply,
    render_template as render_prompt,
)
from .fonts import default_registry

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    steps: int = 20
    canvas: int = 128
    patch: int = 8
    latent_d: int = 32
    tau_start: float = 0.2
    tau_end: float = 0.8
    s_plus: float = 2.0
    s_minus: float = 0.1
    blur_sigma: float = 1.5
    enable_fd: bool = True
    enable_reweight: bool = True
    refine: bool = True
    max_rounds: int = DEFAULT_MAX_ROUNDS

    def injection(self) -> InjectionConfig:
        return InjectionConfig(
            tau_start=self.tau_start, tau_end=self.tau_end,
            s_plus=self.s_plus, s_minus=self.s_minus,
            blur_sigma=self.blur_sigma,
            enable_fd=self.enable_fd, enable_reweight=self.enable_reweight,
        )


def _save_gray(arr: np.ndarray, path: Path) -> None:
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode="L").save(path)


def draft_background(cfg: PipelineConfig) -> np.ndarray:
    """Deterministic stand-in for the draft T2I preview: seeded smooth gradient."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.canvas
    yy, xx = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    base = 128.0 + 60.0 * np.sin(xx / n * np.pi) * np.cos(yy / n * np.pi)
    noise = rng.standard_normal((n, n)) * 4.0
    return np.clip(base + noise, 0, 255).astype(np.uint8)


def plan_from_vlm(backend, draft: np.ndarray, prompt: str, texts: list[str],
                  font_names: list[str]) -> TypographyPlan:
    tmpl = get_template("typography_analysis")
    message = render_prompt(tmpl, {"font_list": ", ".join(font_names)})
    message += f"\nText items: {json.dumps(list(texts), ensure_ascii=False)}"
    message += f"\nOriginal prompt: {prompt}"
    grid_img = overlay_grid(Image.fromarray(draft, mode="L"))
    import io

    buf = io.BytesIO()
    grid_img.save(buf, format="PNG")
    reply = backend.call("typography_analysis", message, buf.getvalue())
    return parse_plan(reply)


def merge_templates(templates: list[GlyphTemplate]) -> GlyphTemplate:
    """Union of per-region templates on one canvas (dark strokes win)."""
    image = templates[0].image.copy()
    mask = templates[0].mask.copy()
    for t in templates[1:]:
        image = np.minimum(image, t.image)
        mask = mask | t.mask
    return GlyphTemplate(image=image, mask=mask, region=templates[0].region,
                         lines=[ln for t in templates for ln in t.lines],
                         fallback_used=any(t.fallback_used for t in templates))


def mock_refiner(image: np.ndarray, prompt: str, mask=None) -> np.ndarray:
    """Deterministic refinement stand-in: 3x3 mean smoothing."""
    img = image.astype(np.float64)
    padded = np.pad(img, 1, mode="edge")
    acc = np.zeros_like(img)
    for dy in range(3):
        for dx in range(3):
            acc += padded[dy:dy + img.shape[0], dx:dx + img.shape[1]]
    return np.clip(np.round(acc / 9.0), 0, 255).astype(np.uint8)


def make_mock_judge(backend):
    tmpl = get_template("score_image")

    def judge(image: np.ndarray, prompt: str) -> float:
        message = render_prompt(tmpl, {"original_prompt": prompt})
        reply = backend.call("score_image", message,
                             np.ascontiguousarray(image).tobytes())
        return parse_scalar_reply(reply, "number") / 10.0

    return judge


def make_style_refiner(backend, plan: TypographyPlan):
    tmpl = get_template("style_prompt")
    analysis = plan.image_analysis

    def refiner(image: np.ndarray, prompt: str) -> str:
        message = render_prompt(tmpl, {})
        message += (f'\nInput: background_style="{analysis.background_style}", '
                    f'colors={json.dumps(list(analysis.dominant_colors))}, '
                    f'hint="{analysis.text_style_hint}"')
        return backend.call("style_prompt", message)

    return refiner


def run_pipeline(sample: BenchSample, cfg: PipelineConfig, out_dir: str | Path,
                 backend=None, plan_override: TypographyPlan | None = None) -> dict:
    """Run all four stages for one sample; artifacts land in `out_dir`."""
    backend = backend or MockVlmBackend()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    registry = default_registry()

    # Stage 1: extraction
    texts = list(sample.texts) if sample.texts else [extract_quoted_text(sample.prompt)]
    texts = [t for t in texts if t]
    if not texts:
        raise StageError("extraction", "no target text found in prompt or sample")

    # Stage 2: draft preview + typography plan
    draft = draft_background(cfg)
    _save_gray(draft, out / "draft.png")
    if plan_override is not None:
        plan = plan_override
    else:
        try:
            plan = plan_from_vlm(backend, draft, sample.prompt, texts, registry.names())
        except Exception as exc:
            raise StageError("draft_preview", f"plan generation failed: {exc}") from exc
    (out / "plan.json").write_text(serialize_plan(plan), encoding="utf-8")

    # Stage 3: glyph injection
    try:
        templates = [render_template(r, cfg.canvas, cfg.canvas, registry)
                     for r in plan.text_regions]
        template = merge_templates(templates)
    except Exception as exc:
        raise StageError("glyph_injection", f"template rendering failed: {exc}") from exc
    _save_gray(template.image, out / "template.png")
    _save_gray(template.mask.astype(np.uint8) * 255, out / "mask.png")

    vae = ToyVae(d=cfg.latent_d, patch=cfg.patch)
    denoiser = ToyDenoiser(d=cfg.latent_d, seed=cfg.seed)
    result = run_injection(template, sample.prompt, cfg.injection(),
                           n_steps=cfg.steps, seed=cfg.seed,
                           vae=vae, denoiser=denoiser)
    with open(out / "trace.jsonl", "w", encoding="utf-8") as fh:
        for row in result.trace:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    injected = vae.decode(result.latent, out_shape=(cfg.canvas, cfg.canvas))
    injected = np.clip(np.round(injected), 0, 255).astype(np.uint8)
    _save_gray(injected, out / "injected.png")

    # Stage 4: style refinement
    refined = injected
    rounds: list[dict] = []
    if cfg.refine:
        pixel_mask = PixelMask(bits=template.mask)
        judge = make_mock_judge(backend)
        style_ref = make_style_refiner(backend, plan)
        refined, rounds = refine_loop(injected, sample.prompt, pixel_mask,
                                      mock_refiner, style_ref, judge,
                                      max_rounds=cfg.max_rounds)
        _save_gray(refined, out / "refined.png")

    report = {
        "sample_id": sample.id,
        "texts": texts,
        "stages": {
            "extraction": {"texts": texts},
            "draft_preview": {"regions": len(plan.text_regions)},
            "glyph_injection": {
                "steps": cfg.steps,
                "injected_steps": sum(1 for r in result.trace if r["injected"]),
                "glyph_tokens": len(result.index_sets.img),
                "text_tokens": len(result.index_sets.txt),
                "fallback_used": template.fallback_used,
            },
            "style_refinement": {"enabled": cfg.refine, "rounds": rounds},
        },
        "config": {
            "seed": cfg.seed, "steps": cfg.steps,
            "window": [cfg.tau_start, cfg.tau_end],
            "s_plus": cfg.s_plus, "s_minus": cfg.s_minus,
            "enable_fd": cfg.enable_fd, "enable_reweight": cfg.enable_reweight,
            "refine": cfg.refine,
        },
    }
    (out / "report.json").write_text(
        json.dumps(report, sort_keys=True, ensure_ascii=False, indent=2),
        encoding="utf-8")
    return report
