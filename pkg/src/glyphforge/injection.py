"""Glyph injection: token index sets, attention bias construction,
frequency-decomposed latent blending, and the orchestrated denoising loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diffusion import (
    LatentGrid,
    NoiseSchedule,
    ToyDenoiser,
    ToyVae,
    forward_noise,
    invert_template,
    make_schedule,
    scheduler_step,
    tokenize,
)
from .renderer import GlyphTemplate, _reflect_indices
from .segmentation import TokenMask, binarize, downsample_mask, otsu_threshold

QUOTE_PAIRS = {'"': '"', "“": "”"}


class QuoteError(ValueError):
    pass


@dataclass(frozen=True)
class IndexSets:
    """Global token-layout index sets: text, glyph-covered image, non-glyph image."""

    txt: frozenset[int]
    img: frozenset[int]
    img_rest: frozenset[int]

    def validate(self, n_image_tokens: int) -> None:
        if self.img & self.img_rest:
            raise ValueError("glyph and non-glyph image index sets overlap")
        if (self.img | self.img_rest) != frozenset(range(n_image_tokens)):
            raise ValueError("image index sets do not partition the image tokens")
        if self.txt & (self.img | self.img_rest):
            raise ValueError("text indices overlap image indices")


@dataclass(frozen=True)
class InjectionConfig:
    tau_start: float = 0.2
    tau_end: float = 0.8
    s_plus: float = 2.0
    s_minus: float = 0.1
    blur_sigma: float = 1.5
    coverage: float = 0.25
    enable_fd: bool = True
    enable_reweight: bool = True

    def __post_init__(self):
        if not 0.0 <= self.tau_start < self.tau_end <= 1.0:
            raise ValueError(f"bad window [{self.tau_start},{self.tau_end})")
        if not 0.0 < self.s_minus <= 1.0 <= self.s_plus:
            raise ValueError("scales must satisfy 0 < s_minus <= 1 <= s_plus")


def quoted_spans(text: str) -> list[tuple[int, int]]:
    """Character spans strictly inside double-quoted regions (ASCII or typographic)."""
    spans = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch in QUOTE_PAIRS:
            closer = QUOTE_PAIRS[ch]
            end = text.find(closer, i + 1)
            if end < 0:
                raise QuoteError(f"unbalanced quote opened at position {i}")
            spans.append((i + 1, end))
            i = end + 1
        else:
            i += 1
    return spans


def find_token_indices(prompt: str, tokenizer=tokenize, image_token_count: int = 0) -> frozenset[int]:
    """Global indices (offset by the image token count) of tokens inside quoted spans."""
    spans = quoted_spans(prompt)
    out = set()
    for idx, (tok, start, end) in enumerate(tokenizer(prompt)):
        if tok in ('"', "“", "”"):
            continue
        for s, e in spans:
            if start >= s and end <= e:
                out.add(image_token_count + idx)
                break
    return frozenset(out)


def build_bias(sets: IndexSets, cfg: InjectionConfig, n_total: int) -> np.ndarray:
    """Additive logit bias: +log(s_plus) on glyph<->text pairs, +log(s_minus) on rest<->text."""
    for idx in sets.txt | sets.img | sets.img_rest:
        if idx >= n_total:
            raise ValueError(f"index {idx} out of range for {n_total} tokens")
    bias = np.zeros((n_total, n_total))
    a_plus = math.log(cfg.s_plus)
    a_minus = math.log(cfg.s_minus)
    txt = sorted(sets.txt)
    img = sorted(sets.img)
    rest = sorted(sets.img_rest)
    if txt:
        if img:
            bias[np.ix_(img, txt)] += a_plus
            bias[np.ix_(txt, img)] += a_plus
        if rest:
            bias[np.ix_(rest, txt)] += a_minus
            bias[np.ix_(txt, rest)] += a_minus
    return bias


def gaussian_blur_latent(z: LatentGrid, sigma: float) -> LatentGrid:
    """Per-channel separable 2-D Gaussian blur, radius ceil(3*sigma), reflect padding."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return z.like(z.values.copy())
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(x ** 2) / (2 * sigma ** 2))
    kernel /= kernel.sum()
    values = z.values
    h, w, _ = values.shape
    rows = _reflect_indices(h, radius)
    padded = values[rows, :, :]
    out = np.zeros_like(values)
    for k in range(2 * radius + 1):
        out += kernel[k] * padded[k:k + h, :, :]
    cols = _reflect_indices(w, radius)
    padded = out[:, cols, :]
    final = np.zeros_like(values)
    for k in range(2 * radius + 1):
        final += kernel[k] * padded[:, k:k + w, :]
    return z.like(final)


def freq_decompose_blend(z: LatentGrid, z_tpl: LatentGrid, mask: TokenMask,
                         sigma: float) -> LatentGrid:
    """LF(z) + HF(z) * (1-M) + HF(z_tpl) * M, with LF = Gaussian blur."""
    if z.values.shape != z_tpl.values.shape:
        raise ValueError("latent and template shapes differ")
    if mask.grid.shape != (z.h, z.w):
        raise ValueError(f"mask grid {mask.grid.shape} != latent grid {(z.h, z.w)}")
    hf_z = z.values - gaussian_blur_latent(z, sigma).values
    hf_tpl = z_tpl.values - gaussian_blur_latent(z_tpl, sigma).values
    m = mask.grid[:, :, None].astype(np.float64)
    # rearranged as z + M*(HF(z_tpl) - HF(z)) so the no-op cases stay exact
    return z.like(z.values + m * (hf_tpl - hf_z))


def in_window(t: int, n_steps: int, cfg: InjectionConfig) -> bool:
    """True iff t/N lies in the half-open window [tau_start, tau_end)."""
    frac = t / n_steps
    return cfg.tau_start <= frac < cfg.tau_end


@dataclass
class InjectionResult:
    latent: LatentGrid
    trace: list[dict]
    token_mask: TokenMask
    index_sets: IndexSets


def run_injection(
    template: GlyphTemplate,
    prompt: str,
    cfg: InjectionConfig,
    n_steps: int = 20,
    seed: int = 0,
    vae: ToyVae | None = None,
    denoiser: ToyDenoiser | None = None,
) -> InjectionResult:
    """Full injection loop: preprocessing, biased denoising, windowed blending.

    Deterministic for fixed (template, prompt, cfg, n_steps, seed).
    """
    vae = vae or ToyVae()
    denoiser = denoiser or ToyDenoiser(d=vae.d, seed=seed)
    schedule = make_schedule(n_steps)

    # Stage 1: preprocessing
    threshold = otsu_threshold(template.image)
    pixel_mask = binarize(template.image, threshold)
    token_mask = downsample_mask(pixel_mask, vae.patch, cfg.coverage)
    template_latent = vae.encode(template.image.astype(np.float64))
    z_list = invert_template(template_latent, schedule, seed)

    n_img = template_latent.n_tokens
    txt_tokens = denoiser.embed_prompt(prompt)
    n_total = n_img + txt_tokens.shape[0]
    sets = IndexSets(
        txt=find_token_indices(prompt, tokenize, n_img),
        img=frozenset(int(i) for i in token_mask.covered_indices()),
        img_rest=frozenset(int(i) for i in token_mask.uncovered_indices()),
    )
    sets.validate(n_img)
    bias = build_bias(sets, cfg, n_total) if cfg.enable_reweight else None

    rng = np.random.default_rng(seed)
    z = template_latent.like(rng.standard_normal(template_latent.values.shape))

    trace = []
    for t in range(n_steps, 0, -1):
        eps_hat = denoiser.forward(z, t, txt_tokens, bias)
        injected = cfg.enable_fd and in_window(t, n_steps, cfg)
        if injected:
            z = freq_decompose_blend(z, z_list[t], token_mask, cfg.blur_sigma)
        z = scheduler_step(z, eps_hat, t, schedule)
        trace.append({
            "step": t,
            "injected": injected,
            "bias_nonzeros": int(np.count_nonzero(bias)) if bias is not None else 0,
            "latent_l2": float(np.linalg.norm(z.values)),
        })
    return InjectionResult(latent=z, trace=trace, token_mask=token_mask, index_sets=sets)
