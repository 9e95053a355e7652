"""Evaluation math: text normalization, Levenshtein distance, OCR scores,
CLIP rescaling, VLM score normalization, and pluggable scorer interfaces."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

NED_EPSILON = 1e-9
CLIP_PREFIX = "A photo depicts "

_WS_RE = re.compile(r"\s+")


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class TextPair:
    target: str
    recognized: str


def normalize_text(s: str) -> str:
    """Unicode-aware lowercase, whitespace runs collapsed, ends trimmed."""
    return _WS_RE.sub(" ", s.casefold()).strip()


def levenshtein(a: str, b: str) -> int:
    """Edit distance (insert/delete/substitute) over Unicode scalar values."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (ca != cb),
            ))
        prev = cur
    return prev[-1]


def ocr_acc(pair: TextPair) -> float:
    """Recall-style score: max(0, 1 - d/|target|) after normalization."""
    t = normalize_text(pair.target)
    r = normalize_text(pair.recognized)
    if not t:
        raise MetricError("empty normalized target")
    return max(0.0, 1.0 - levenshtein(t, r) / len(t))


def ocr_ned(pair: TextPair, eps: float = NED_EPSILON) -> float:
    """Symmetric similarity: max(0, 1 - d/(max(|t|,|r|)+eps)); penalizes hallucination."""
    t = normalize_text(pair.target)
    r = normalize_text(pair.recognized)
    return max(0.0, 1.0 - levenshtein(t, r) / (max(len(t), len(r)) + eps))


def clip_rescale(cos: float) -> float:
    if abs(cos) > 1.0 + 1e-6:
        raise MetricError(f"cosine out of range: {cos}")
    return 2.5 * max(cos, 0.0)


def vlm_score_normalize(raw: float) -> float:
    return min(max(raw, 0.0), 10.0) / 10.0


class EmbeddingScorer(Protocol):
    def embed_image(self, image) -> np.ndarray: ...
    def embed_text(self, text: str) -> np.ndarray: ...


def clip_score(image, prompt: str, scorer: EmbeddingScorer) -> float:
    """Embed image and prefixed prompt, unit-normalize, rescale the cosine."""
    vi = np.asarray(scorer.embed_image(image), dtype=np.float64)
    vt = np.asarray(scorer.embed_text(CLIP_PREFIX + prompt), dtype=np.float64)
    ni = np.linalg.norm(vi)
    nt = np.linalg.norm(vt)
    if ni == 0 or nt == 0:
        raise MetricError("zero-norm embedding")
    return clip_rescale(float(vi @ vt / (ni * nt)))


class VqaUnavailableError(RuntimeError):
    pass


def vqa_score(image, prompt: str, backend: Callable | None) -> float:
    """Pass the prompt verbatim to the paired image-text scorer; no wrapping."""
    if backend is None:
        raise VqaUnavailableError("no VQA backend configured")
    return float(backend(image, prompt))


class HashEmbeddingScorer:
    """Deterministic mock: embeddings seeded from a content hash."""

    def __init__(self, dim: int = 64):
        self.dim = dim

    def _vec(self, payload: bytes) -> np.ndarray:
        seed = int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self.dim)
        return v / np.linalg.norm(v)

    def embed_image(self, image) -> np.ndarray:
        arr = np.ascontiguousarray(np.asarray(image))
        return self._vec(b"img:" + arr.tobytes())

    def embed_text(self, text: str) -> np.ndarray:
        return self._vec(b"txt:" + text.encode("utf-8"))
