"""Iterative style refinement: four-candidate pool, score-judge argmax selection,
and the closed refine loop with prompt amendment."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .segmentation import PixelMask

log = logging.getLogger(__name__)

CANDIDATE_ORDER = ("origin", "mask", "ref", "sty")
CONVERGENCE_EPS = 1e-3
DEFAULT_MAX_ROUNDS = 3

# refiner: (image, prompt, mask or None) -> image; judge: (image, prompt) -> score
RefinerBackend = Callable[[np.ndarray, str, PixelMask | None], np.ndarray]
JudgeFn = Callable[[np.ndarray, str], float]


class RefinementError(RuntimeError):
    pass


@dataclass
class Candidate:
    tag: str
    image: np.ndarray | None
    prompt: str
    failed: bool = False
    error: str = ""


@dataclass
class CandidatePool:
    candidates: list[Candidate]

    def __post_init__(self):
        tags = tuple(c.tag for c in self.candidates)
        if tags != CANDIDATE_ORDER:
            raise RefinementError(f"pool must be exactly {CANDIDATE_ORDER}, got {tags}")

    def __iter__(self):
        return iter(self.candidates)


def _blend_by_mask(origin: np.ndarray, regen: np.ndarray, mask: PixelMask) -> np.ndarray:
    m = mask.bits.astype(np.float64)
    if origin.ndim == 3:
        m = m[:, :, None]
    return m * origin + (1.0 - m) * regen


def build_candidate_pool(origin: np.ndarray, prompt: str, style_prompt: str,
                         mask: PixelMask, refiner: RefinerBackend) -> CandidatePool:
    """origin passthrough + the three refinement strategies; failures excluded later."""
    if mask.bits.shape != origin.shape[:2]:
        raise RefinementError("mask dimensions do not match the image")

    def attempt(tag: str, prompt_used: str, fn) -> Candidate:
        try:
            return Candidate(tag=tag, image=fn(), prompt=prompt_used)
        except Exception as exc:
            log.warning("candidate %s failed: %s", tag, exc)
            return Candidate(tag=tag, image=None, prompt=prompt_used,
                             failed=True, error=str(exc))

    return CandidatePool([
        Candidate(tag="origin", image=origin, prompt=prompt),
        attempt("mask", prompt,
                lambda: _blend_by_mask(origin, refiner(origin, prompt, None), mask)),
        attempt("ref", prompt, lambda: refiner(origin, prompt, mask)),
        attempt("sty", style_prompt, lambda: refiner(origin, style_prompt, mask)),
    ])


def judge_select(pool: CandidatePool, prompt: str,
                 judge: JudgeFn) -> tuple[Candidate, float]:
    """Argmax of judge over the pool; ties break by fixed origin->mask->ref->sty order."""
    best: Candidate | None = None
    best_score = -np.inf
    for cand in pool:
        if cand.failed:
            continue
        score = float(judge(cand.image, prompt))
        if score > best_score:
            best, best_score = cand, score
    if best is None:
        raise RefinementError("all candidates failed")
    return best, best_score


def refine_loop(
    origin: np.ndarray,
    prompt: str,
    mask: PixelMask,
    refiner: RefinerBackend,
    style_refiner: Callable[[np.ndarray, str], str],
    judge: JudgeFn,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
    eps_conv: float = CONVERGENCE_EPS,
) -> tuple[np.ndarray, list[dict]]:
    """Closed loop: amend prompt, rebuild pool from current best, judge, repeat.

    Stops when the selected score fails to improve by > eps_conv or the round
    cap is hit; always returns the best-ever image.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    current = origin
    best_ever = origin
    best_ever_score = -np.inf
    prev_score = -np.inf
    rounds = []
    for round_no in range(1, max_rounds + 1):
        amended = style_refiner(current, prompt)
        pool = build_candidate_pool(current, prompt, amended, mask, refiner)
        memo: dict[int, float] = {}

        def memo_judge(image, p):
            key = id(image)
            if key not in memo:
                memo[key] = float(judge(image, p))
            return memo[key]

        selected, score = judge_select(pool, prompt, memo_judge)
        scores = [None if c.failed else memo[id(c.image)] for c in pool]
        converged = score <= prev_score + eps_conv
        rounds.append({
            "round": round_no,
            "prompt_amended": amended,
            "scores": scores,
            "selected": selected.tag,
            "converged": converged,
        })
        if score > best_ever_score:
            best_ever, best_ever_score = selected.image, score
        if converged and round_no > 1:
            break
        prev_score = score
        current = selected.image
    return best_ever, rounds
