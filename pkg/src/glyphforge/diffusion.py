"""Toy seeded diffusion-transformer core: linear noise schedule, patchify,
toy VAE stand-in, rotary-embedded biased attention, denoiser and scheduler."""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass

import numpy as np

ALPHA_GUARD = 1e-4
EMBED_BUCKETS = 4096

_TOKEN_RE = re.compile(r"[A-Za-z0-9]+|[^\sA-Za-z0-9]")


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    """Rectified-flow linear schedule: alpha_t = 1 - t/N, sigma_t = t/N."""

    n_steps: int
    alpha: np.ndarray
    sigma: np.ndarray


def make_schedule(n_steps: int) -> NoiseSchedule:
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    t = np.arange(n_steps + 1, dtype=np.float64)
    return NoiseSchedule(n_steps=n_steps, alpha=1.0 - t / n_steps, sigma=t / n_steps)


@dataclass(frozen=True)
class LatentGrid:
    """h x w x d latent tensor on a token grid of pixel patch size `patch`."""

    values: np.ndarray  # float64 (h, w, d)
    patch: int = 8

    @property
    def h(self) -> int:
        return self.values.shape[0]

    @property
    def w(self) -> int:
        return self.values.shape[1]

    @property
    def d(self) -> int:
        return self.values.shape[2]

    @property
    def n_tokens(self) -> int:
        return self.h * self.w

    def tokens(self) -> np.ndarray:
        """Row-major (h*w, d) token view."""
        return self.values.reshape(self.n_tokens, self.d)

    def like(self, values: np.ndarray) -> "LatentGrid":
        if values.shape != self.values.shape:
            raise ShapeError(f"shape mismatch: {values.shape} vs {self.values.shape}")
        return LatentGrid(values=values, patch=self.patch)


def forward_noise(z0: LatentGrid, t: int, schedule: NoiseSchedule, eps: LatentGrid) -> LatentGrid:
    """z_t = alpha_t * z_0 + sigma_t * eps."""
    if z0.values.shape != eps.values.shape:
        raise ShapeError("z0 and eps shapes differ")
    a, s = schedule.alpha[t], schedule.sigma[t]
    return z0.like(a * z0.values + s * eps.values)


def scheduler_step(z_t: LatentGrid, eps_hat: LatentGrid, t: int,
                   schedule: NoiseSchedule) -> LatentGrid:
    """Deterministic step: reconstruct z0-hat, re-noise to level t-1."""
    if not 1 <= t <= schedule.n_steps:
        raise ValueError(f"t out of range: {t}")
    a_t = max(schedule.alpha[t], ALPHA_GUARD)
    z0_hat = (z_t.values - schedule.sigma[t] * eps_hat.values) / a_t
    out = schedule.alpha[t - 1] * z0_hat + schedule.sigma[t - 1] * eps_hat.values
    return z_t.like(out)


def pad_to_patch(pixels: np.ndarray, patch: int, fill: float = 0.0) -> np.ndarray:
    h, w = pixels.shape[:2]
    pad_h = (-h) % patch
    pad_w = (-w) % patch
    if pad_h == 0 and pad_w == 0:
        return pixels
    pad = [(0, pad_h), (0, pad_w)] + [(0, 0)] * (pixels.ndim - 2)
    return np.pad(pixels, pad, constant_values=fill)


def patchify(pixels: np.ndarray, patch: int, fill: float = 0.0) -> np.ndarray:
    """(H, W[, C]) pixels -> (h*w, patch*patch*C) tokens, row-major patch order."""
    if pixels.ndim == 2:
        pixels = pixels[:, :, None]
    pixels = pad_to_patch(pixels, patch, fill)
    hp, wp, c = pixels.shape
    h, w = hp // patch, wp // patch
    blocks = pixels.reshape(h, patch, w, patch, c).transpose(0, 2, 1, 3, 4)
    return blocks.reshape(h * w, patch * patch * c)


def unpatchify(tokens: np.ndarray, h: int, w: int, patch: int, channels: int = 1) -> np.ndarray:
    """Exact inverse of patchify (before padding crop)."""
    blocks = tokens.reshape(h, w, patch, patch, channels).transpose(0, 2, 1, 3, 4)
    out = blocks.reshape(h * patch, w * patch, channels)
    return out[:, :, 0] if channels == 1 else out


def _orthogonal_map(d: int, seed: int = 1234) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


class ToyVae:
    """Seeded stand-in encoder/decoder: per-patch channel means through a fixed
    orthogonal map.  Lossy only within a patch; decode(encode(x)) is the
    per-patch mean image."""

    def __init__(self, d: int = 32, patch: int = 8, seed: int = 1234):
        self.d = d
        self.patch = patch
        self.q = _orthogonal_map(d, seed)

    def encode(self, pixels: np.ndarray) -> LatentGrid:
        """(H, W[, C]) image in [0,255] -> LatentGrid, values centered to [-1,1]."""
        pixels = np.asarray(pixels, dtype=np.float64)
        if pixels.ndim == 2:
            pixels = pixels[:, :, None]
        c = pixels.shape[2]
        if c > self.d:
            raise ShapeError(f"too many channels ({c}) for latent depth {self.d}")
        padded = pad_to_patch(pixels, self.patch)
        hp, wp, _ = padded.shape
        h, w = hp // self.patch, wp // self.patch
        means = padded.reshape(h, self.patch, w, self.patch, c).mean(axis=(1, 3))
        means = means / 127.5 - 1.0
        feats = np.zeros((h, w, self.d))
        feats[:, :, :c] = means
        values = feats @ self.q
        grid = LatentGrid(values=values, patch=self.patch)
        return grid

    def decode(self, z: LatentGrid, channels: int = 1,
               out_shape: tuple[int, int] | None = None) -> np.ndarray:
        feats = z.values @ self.q.T
        means = (feats[:, :, :channels] + 1.0) * 127.5
        pixels = np.repeat(np.repeat(means, self.patch, axis=0), self.patch, axis=1)
        pixels = np.clip(pixels, 0.0, 255.0)
        if out_shape is not None:
            pixels = pixels[:out_shape[0], :out_shape[1]]
        return pixels[:, :, 0] if channels == 1 else pixels


def tokenize(text: str) -> list[tuple[str, int, int]]:
    """Whitespace-plus-punctuation tokenizer with character spans."""
    return [(m.group(0), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def attention_with_bias(q: np.ndarray, k: np.ndarray, v: np.ndarray,
                        bias: np.ndarray | None = None) -> np.ndarray:
    """softmax(Q K^T / sqrt(d) + B) V with numerically stable softmax."""
    for name, m in (("q", q), ("k", k), ("v", v)):
        if not np.isfinite(m).all():
            raise ValueError(f"non-finite values in {name}")
    weights = softmax_attention_weights(q, k, bias)
    return weights @ v


def softmax_attention_weights(q: np.ndarray, k: np.ndarray,
                              bias: np.ndarray | None = None) -> np.ndarray:
    d = q.shape[-1]
    logits = (q @ k.T) / np.sqrt(d)
    if bias is not None:
        if bias.shape != logits.shape:
            raise ShapeError(f"bias shape {bias.shape} != {logits.shape}")
        logits = logits + bias
    logits = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=-1, keepdims=True)


def rope_apply(q: np.ndarray, k: np.ndarray,
               positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rotary position embedding on channel pairs; norm-preserving."""
    d = q.shape[-1]
    if d % 2:
        raise ShapeError("rope requires an even channel count")
    half = d // 2
    freqs = 10000.0 ** (-np.arange(half) / half)
    angles = np.asarray(positions, dtype=np.float64)[:, None] * freqs[None, :]
    cos, sin = np.cos(angles), np.sin(angles)

    def rotate(x: np.ndarray) -> np.ndarray:
        x1, x2 = x[:, 0::2], x[:, 1::2]
        out = np.empty_like(x)
        out[:, 0::2] = x1 * cos - x2 * sin
        out[:, 1::2] = x1 * sin + x2 * cos
        return out

    return rotate(q), rotate(k)


class ToyDenoiser:
    """L seeded transformer blocks over concatenated image+text tokens.

    Exercises the bias/injection mechanism; makes no claim to image quality.
    """

    def __init__(self, d: int = 32, n_heads: int = 4, n_blocks: int = 2, seed: int = 0):
        if d % n_heads:
            raise ShapeError("d must divide evenly into heads")
        self.d = d
        self.n_heads = n_heads
        self.n_blocks = n_blocks
        self.seed = seed
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(d)
        self.blocks = []
        for _ in range(n_blocks):
            self.blocks.append({
                "wq": rng.standard_normal((d, d)) * scale,
                "wk": rng.standard_normal((d, d)) * scale,
                "wv": rng.standard_normal((d, d)) * scale,
                "wo": rng.standard_normal((d, d)) * scale,
                "w1": rng.standard_normal((d, 2 * d)) * scale,
                "w2": rng.standard_normal((2 * d, d)) * scale,
            })
        self.embedding = rng.standard_normal((EMBED_BUCKETS, d)) * scale
        self.time_w = rng.standard_normal(d) * scale

    def embed_prompt(self, prompt: str) -> np.ndarray:
        toks = tokenize(prompt)
        if not toks:
            return np.zeros((0, self.d))
        idx = [_bucket(tok) for tok, _, _ in toks]
        return self.embedding[idx]

    def forward(self, z_t: LatentGrid, t: int, prompt_tokens: np.ndarray,
                bias: np.ndarray | None = None,
                collect_attn: list | None = None) -> LatentGrid:
        """Predict noise; optionally append per-block head-mean attention maps."""
        n_img = z_t.n_tokens
        n_txt = prompt_tokens.shape[0]
        n_total = n_img + n_txt
        if bias is not None and bias.shape != (n_total, n_total):
            raise ShapeError(f"bias must be ({n_total},{n_total}), got {bias.shape}")
        x = np.concatenate([z_t.tokens(), prompt_tokens.reshape(n_txt, self.d)], axis=0)
        x = x + np.tanh(t / 10.0) * self.time_w
        positions = np.arange(n_total, dtype=np.float64)
        head_d = self.d // self.n_heads
        for block in self.blocks:
            q = x @ block["wq"]
            k = x @ block["wk"]
            v = x @ block["wv"]
            q, k = rope_apply(q, k, positions)
            attn_out = np.empty_like(x)
            attn_accum = np.zeros((n_total, n_total)) if collect_attn is not None else None
            for hh in range(self.n_heads):
                sl = slice(hh * head_d, (hh + 1) * head_d)
                weights = softmax_attention_weights(q[:, sl], k[:, sl], bias)
                attn_out[:, sl] = weights @ v[:, sl]
                if attn_accum is not None:
                    attn_accum += weights
            if attn_accum is not None:
                collect_attn.append(attn_accum / self.n_heads)
            x = x + attn_out @ block["wo"]
            x = x + np.tanh(x @ block["w1"]) @ block["w2"]
        eps_tokens = x[:n_img]
        return z_t.like(eps_tokens.reshape(z_t.h, z_t.w, z_t.d))


def _bucket(token: str) -> int:
    h = 2166136261
    for b in token.encode("utf-8"):
        h = ((h ^ b) * 16777619) & 0xFFFFFFFF
    return h % EMBED_BUCKETS


def invert_template(template_latent: LatentGrid, schedule: NoiseSchedule,
                    seed: int) -> list[LatentGrid]:
    """Forward-noising trajectory of the template, one shared eps* from `seed`."""
    rng = np.random.default_rng(seed)
    eps = template_latent.like(rng.standard_normal(template_latent.values.shape))
    return [forward_noise(template_latent, t, schedule, eps)
            for t in range(schedule.n_steps + 1)]


MAGIC = b"GFLT"


def save_latent(z: LatentGrid, path: str) -> None:
    """Binary latent file: magic, three u32-LE dims, f32-LE values row-major."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", z.h, z.w, z.d))
        fh.write(z.values.astype("<f4").tobytes(order="C"))


def load_latent(path: str, patch: int = 8) -> LatentGrid:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"bad magic bytes: {magic!r}")
        h, w, d = struct.unpack("<III", fh.read(12))
        values = np.frombuffer(fh.read(h * w * d * 4), dtype="<f4").astype(np.float64)
    return LatentGrid(values=values.reshape(h, w, d), patch=patch)
