import numpy as np
import pytest

from glyphforge.refinement import (
    CANDIDATE_ORDER,
    Candidate,
    CandidatePool,
    RefinementError,
    build_candidate_pool,
    judge_select,
    refine_loop,
)
from glyphforge.segmentation import PixelMask


def img(fill):
    return np.full((4, 4), float(fill))


def center_mask():
    bits = np.zeros((4, 4), dtype=bool)
    bits[1:3, 1:3] = True
    return PixelMask(bits)


def passthrough_refiner(image, prompt, mask):
    return image + 1.0


def test_pool_order_enforced():
    cands = [Candidate(tag=t, image=img(0), prompt="p") for t in CANDIDATE_ORDER]
    CandidatePool(cands)
    with pytest.raises(RefinementError):
        CandidatePool(list(reversed(cands)))


def test_pool_construction_tags_and_masked_blend():
    pool = build_candidate_pool(img(0), "p", "styled p", center_mask(),
                                passthrough_refiner)
    tags = [c.tag for c in pool]
    assert tags == list(CANDIDATE_ORDER)
    by_tag = {c.tag: c for c in pool}
    assert np.array_equal(by_tag["origin"].image, img(0))
    # mask candidate keeps the glyph pixels from origin, takes the rest regenerated
    masked = by_tag["mask"].image
    assert masked[1, 1] == 0.0 and masked[0, 0] == 1.0
    assert by_tag["sty"].prompt == "styled p"


def test_pool_mask_shape_check():
    with pytest.raises(RefinementError):
        build_candidate_pool(np.zeros((6, 6)), "p", "s", center_mask(),
                             passthrough_refiner)


def test_pool_captures_refiner_failure():
    def flaky(image, prompt, mask):
        if mask is None:
            raise RuntimeError("boom")
        return image

    pool = build_candidate_pool(img(0), "p", "s", center_mask(), flaky)
    by_tag = {c.tag: c for c in pool}
    assert by_tag["mask"].failed and "boom" in by_tag["mask"].error
    assert not by_tag["ref"].failed


def test_judge_select_argmax():
    pool = build_candidate_pool(img(0), "p", "s", center_mask(), passthrough_refiner)
    scores = {"origin": 1.0, "mask": 4.0, "ref": 2.0, "sty": 3.0}
    order = []

    def judge(image, prompt):
        # identify the candidate by its corner pixel (origin=0, others=1)
        for c in pool:
            if c.image is image:
                order.append(c.tag)
                return scores[c.tag]
        raise AssertionError("unknown image")

    best, score = judge_select(pool, "p", judge)
    assert best.tag == "mask" and score == 4.0
    assert order == list(CANDIDATE_ORDER)


def test_judge_select_tie_prefers_earlier():
    pool = build_candidate_pool(img(0), "p", "s", center_mask(), passthrough_refiner)
    best, score = judge_select(pool, "p", lambda image, p: 7.0)
    assert best.tag == "origin"


def test_judge_select_skips_failed():
    def failing(image, prompt, mask):
        raise RuntimeError("no backend")

    pool = build_candidate_pool(img(0), "p", "s", center_mask(), failing)
    best, _ = judge_select(pool, "p", lambda image, p: 1.0)
    assert best.tag == "origin"


def test_judge_select_all_failed():
    cands = [Candidate(tag=t, image=None, prompt="p", failed=True)
             for t in CANDIDATE_ORDER]
    with pytest.raises(RefinementError):
        judge_select(CandidatePool(cands), "p", lambda image, p: 0.0)


def test_refine_loop_round_cap():
    calls = []

    def judge(image, prompt):
        calls.append(1)
        return float(image.mean())  # refiner keeps improving, never converges

    best, rounds = refine_loop(img(0), "p", center_mask(), passthrough_refiner,
                               lambda image, p: p + " styled", judge, max_rounds=3)
    assert len(rounds) == 3
    assert not rounds[0]["converged"]
    assert rounds[0]["prompt_amended"] == "p styled"
    assert best.mean() > 0.0


def test_refine_loop_converges_early():
    def judge(image, prompt):
        return 5.0  # flat scores: round 2 fails to beat round 1 by eps

    best, rounds = refine_loop(img(0), "p", center_mask(), passthrough_refiner,
                               lambda image, p: p, judge, max_rounds=3)
    assert len(rounds) == 2
    assert rounds[-1]["converged"]


def test_refine_loop_single_round_never_marked_converged_stop():
    # even if round 1 looks converged, the loop must run at least two rounds
    best, rounds = refine_loop(img(0), "p", center_mask(), passthrough_refiner,
                               lambda image, p: p, lambda image, p: -1.0, max_rounds=3)
    assert len(rounds) >= 2


def test_refine_loop_best_ever_retained():
    scripted = iter([3.0, 9.0, 2.0, 2.0,    # round 1: ref-like peak at 9
                     1.0, 1.0, 1.0, 1.0,    # round 2: regression
                     ])

    def judge(image, prompt):
        return next(scripted)

    best, rounds = refine_loop(img(0), "p", center_mask(), passthrough_refiner,
                               lambda image, p: p, judge, max_rounds=3)
    # round 2 scored worse everywhere; the round-1 winner is what comes back
    assert len(rounds) == 2
    assert rounds[0]["selected"] == "mask"
    assert float(best[0, 0]) == 1.0  # round-1 mask candidate, not a round-2 image


def test_refine_loop_judge_called_once_per_candidate():
    count = [0]

    def judge(image, prompt):
        count[0] += 1
        return float(image.mean())

    _, rounds = refine_loop(img(0), "p", center_mask(), passthrough_refiner,
                            lambda image, p: p, judge, max_rounds=2)
    assert count[0] == 4 * len(rounds)


def test_refine_loop_scores_log_shape():
    _, rounds = refine_loop(img(0), "p", center_mask(), passthrough_refiner,
                            lambda image, p: p, lambda image, p: 1.0, max_rounds=2)
    for row in rounds:
        assert set(row) == {"round", "prompt_amended", "scores", "selected", "converged"}
        assert len(row["scores"]) == 4


def test_refine_loop_bad_rounds():
    with pytest.raises(ValueError):
        refine_loop(img(0), "p", center_mask(), passthrough_refiner,
                    lambda image, p: p, lambda image, p: 0.0, max_rounds=0)
