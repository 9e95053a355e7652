"""Benchmark manifest ingestion, statistics, ablation arithmetic, metric
evaluation and report assembly."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

from .metrics import (
    MetricError,
    TextPair,
    clip_score,
    ocr_acc,
    ocr_ned,
    vlm_score_normalize,
    vqa_score,
)

LANGUAGES = {"en", "zh", "formula"}
REPORT_SCHEMA = 1


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class BenchSample:
    id: str
    subset: str
    language: str
    prompt: str
    texts: tuple[str, ...]
    ref_image: str | None = None
    mask: str | None = None
    difficulty: str = ""

    @property
    def target_text(self) -> str:
        return " ".join(self.texts)


def _parse_sample(obj: dict, line_no: int) -> BenchSample:
    def fail(msg: str):
        raise ManifestError(f"line {line_no}: {msg}")

    if not isinstance(obj, dict):
        fail("not a JSON object")
    for req in ("id", "subset", "language", "prompt", "texts"):
        if req not in obj:
            fail(f"missing field {req!r}")
    if obj["language"] not in LANGUAGES:
        fail(f"language must be one of {sorted(LANGUAGES)}: {obj['language']!r}")
    texts = obj["texts"]
    if not isinstance(texts, list) or not texts or not all(isinstance(t, str) for t in texts):
        fail("texts must be a non-empty list of strings")
    return BenchSample(
        id=str(obj["id"]),
        subset=str(obj["subset"]),
        language=obj["language"],
        prompt=str(obj["prompt"]),
        texts=tuple(texts),
        ref_image=obj.get("ref_image"),
        mask=obj.get("mask"),
        difficulty=str(obj.get("difficulty", "")),
    )


def load_manifest(path: str) -> list[BenchSample]:
    """Parse a UTF-8 JSON-lines manifest, preserving order; ids must be unique."""
    samples = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"line {line_no}: malformed JSON: {exc}") from exc
            sample = _parse_sample(obj, line_no)
            if sample.id in seen:
                raise ManifestError(f"line {line_no}: duplicate id {sample.id!r}")
            seen.add(sample.id)
            samples.append(sample)
    return samples


def fixture_manifest_path() -> str:
    return str(resources.files("glyphforge").joinpath("data/fixture_manifest.jsonl"))


def compute_stats(samples: list[BenchSample]) -> dict[str, dict]:
    """Per-subset counts and average text/prompt character lengths, plus a
    'Total / Average' row over all samples; averages rounded to 2 decimals."""
    groups: dict[str, list[BenchSample]] = {}
    for s in samples:
        groups.setdefault(s.subset, []).append(s)

    def row(items: list[BenchSample]) -> dict:
        n = len(items)
        return {
            "count": n,
            "avg_text_len": round(sum(len(s.target_text) for s in items) / n, 2) if n else 0.0,
            "avg_prompt_len": round(sum(len(s.prompt) for s in items) / n, 2) if n else 0.0,
        }

    stats = {subset: row(items) for subset, items in groups.items()}
    if samples:
        stats["Total / Average"] = row(samples)
    return stats


def ablation_improvement(baseline_iou: float, variant_iou: float) -> float:
    """Percent improvement over the baseline, one decimal."""
    if baseline_iou <= 0:
        raise ValueError("baseline must be positive")
    return round(100.0 * (variant_iou - baseline_iou) / baseline_iou, 1)


@dataclass
class EvalScorers:
    """Pluggable per-metric backends; only OCR is required."""

    ocr: Callable  # image -> recognized text
    clip: object | None = None       # EmbeddingScorer
    vqa: Callable | None = None      # (image, prompt) -> score
    vlm_style: Callable | None = None  # image -> raw 0-10
    vlm_faith: Callable | None = None  # (image, prompt) -> raw 0-10


def run_eval(images_by_id: dict[str, object], samples: list[BenchSample],
             scorers: EvalScorers) -> dict:
    """Compute all configured metrics per sample plus subset/total aggregates."""
    rows = []
    skipped = []
    errors = []
    for sample in samples:
        image = images_by_id.get(sample.id)
        if image is None:
            skipped.append(sample.id)
            continue
        try:
            recognized = scorers.ocr(image)
            pair = TextPair(target=sample.target_text, recognized=recognized)
            record = {
                "id": sample.id,
                "subset": sample.subset,
                "ocr_acc": ocr_acc(pair),
                "ocr_ned": ocr_ned(pair),
            }
        except MetricError as exc:
            errors.append({"id": sample.id, "error": str(exc)})
            continue
        if scorers.clip is not None:
            record["clip"] = clip_score(image, sample.prompt, scorers.clip)
        if scorers.vqa is not None:
            record["vqa"] = vqa_score(image, sample.prompt, scorers.vqa)
        if scorers.vlm_style is not None:
            record["style"] = vlm_score_normalize(scorers.vlm_style(image))
        if scorers.vlm_faith is not None:
            record["faith"] = vlm_score_normalize(scorers.vlm_faith(image, sample.prompt))
        rows.append(record)

    metric_keys = sorted({k for r in rows for k in r} - {"id", "subset"})

    def aggregate(items: list[dict]) -> dict:
        out = {"count": len(items)}
        for key in metric_keys:
            vals = [r[key] for r in items if key in r]
            out[key] = sum(vals) / len(vals) if vals else None
        return out

    subsets = sorted({r["subset"] for r in rows})
    return {
        "schema": REPORT_SCHEMA,
        "samples": rows,
        "aggregates": {
            "per_subset": {s: aggregate([r for r in rows if r["subset"] == s])
                           for s in subsets},
            "total": aggregate(rows),
        },
        "skipped": skipped,
        "errors": errors,
    }
