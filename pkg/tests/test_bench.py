import json

import pytest

from glyphforge.bench import (
    BenchSample,
    EvalScorers,
    ManifestError,
    ablation_improvement,
    compute_stats,
    fixture_manifest_path,
    load_manifest,
    run_eval,
)
from glyphforge.metrics import HashEmbeddingScorer


def sample_line(**overrides):
    obj = {"id": "s1", "subset": "S", "language": "en",
           "prompt": 'say "HI"', "texts": ["HI"]}
    obj.update(overrides)
    return json.dumps(obj, ensure_ascii=False)


def write_manifest(tmp_path, lines):
    p = tmp_path / "m.jsonl"
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(p)


def test_load_fixture_manifest():
    samples = load_manifest(fixture_manifest_path())
    assert len(samples) == 6
    assert len({s.id for s in samples}) == 6
    langs = {s.language for s in samples}
    assert langs == {"en", "zh", "formula"}
    for s in samples:
        assert s.texts
        # every target string appears inside the prompt's quoted region
        assert all(t in s.prompt for t in s.texts)


def test_target_text_joins():
    s = BenchSample(id="x", subset="S", language="en", prompt="p",
                    texts=("A", "B"))
    assert s.target_text == "A B"


def test_load_rejects_bad_json(tmp_path):
    path = write_manifest(tmp_path, [sample_line(), "{not json"])
    with pytest.raises(ManifestError) as exc:
        load_manifest(path)
    assert "line 2" in str(exc.value)


def test_load_rejects_missing_field(tmp_path):
    path = write_manifest(tmp_path, [sample_line(texts=None)])
    del_obj = json.loads(sample_line())
    del del_obj["texts"]
    path = write_manifest(tmp_path, [json.dumps(del_obj)])
    with pytest.raises(ManifestError) as exc:
        load_manifest(path)
    assert "texts" in str(exc.value)


def test_load_rejects_bad_language(tmp_path):
    path = write_manifest(tmp_path, [sample_line(language="fr")])
    with pytest.raises(ManifestError):
        load_manifest(path)


def test_load_rejects_duplicate_ids(tmp_path):
    path = write_manifest(tmp_path, [sample_line(), sample_line()])
    with pytest.raises(ManifestError) as exc:
        load_manifest(path)
    assert "duplicate" in str(exc.value)


def test_load_skips_blank_lines(tmp_path):
    path = write_manifest(tmp_path, [sample_line(), "", sample_line(id="s2")])
    assert len(load_manifest(path)) == 2


def test_compute_stats_hand_sum(tmp_path):
    lines = [
        sample_line(id="a1", subset="A", prompt="12345", texts=["xy"]),
        sample_line(id="a2", subset="A", prompt="1234567", texts=["xyz"]),
        sample_line(id="b1", subset="B", prompt="123", texts=["x", "y"]),
    ]
    stats = compute_stats(load_manifest(write_manifest(tmp_path, lines)))
    assert stats["A"] == {"count": 2, "avg_text_len": 2.5, "avg_prompt_len": 6.0}
    assert stats["B"] == {"count": 1, "avg_text_len": 3.0, "avg_prompt_len": 3.0}
    # grand row is the sample-weighted mean, not the mean of subset means
    assert stats["Total / Average"] == {
        "count": 3,
        "avg_text_len": round((2 + 3 + 3) / 3, 2),
        "avg_prompt_len": 5.0,
    }


def test_compute_stats_empty():
    assert compute_stats([]) == {}


def test_ablation_improvement_values():
    assert ablation_improvement(0.2703, 0.5531) == 104.6
    assert ablation_improvement(0.2703, 0.3776) == 39.7
    assert ablation_improvement(0.5, 0.5) == 0.0
    assert ablation_improvement(0.5, 0.25) == -50.0


def test_ablation_improvement_bad_baseline():
    with pytest.raises(ValueError):
        ablation_improvement(0.0, 0.5)


def fixture_samples():
    return load_manifest(fixture_manifest_path())


def test_run_eval_perfect_ocr():
    samples = fixture_samples()
    images = {s.id: s.target_text for s in samples}  # image stands in for itself
    report = run_eval(images, samples, EvalScorers(ocr=lambda image: image))
    assert report["schema"] == 1
    assert len(report["samples"]) == 6
    assert report["aggregates"]["total"]["ocr_acc"] == pytest.approx(1.0)
    assert report["aggregates"]["total"]["ocr_ned"] == pytest.approx(1.0, abs=1e-6)
    assert report["skipped"] == [] and report["errors"] == []


def test_run_eval_skips_missing_images():
    samples = fixture_samples()
    images = {samples[0].id: samples[0].target_text}
    report = run_eval(images, samples, EvalScorers(ocr=lambda image: image))
    assert len(report["samples"]) == 1
    assert len(report["skipped"]) == 5


def test_run_eval_optional_scorers():
    samples = fixture_samples()[:2]
    images = {s.id: s.target_text for s in samples}
    scorers = EvalScorers(
        ocr=lambda image: image,
        clip=HashEmbeddingScorer(),
        vqa=lambda image, prompt: 0.83,
        vlm_style=lambda image: 7.0,
        vlm_faith=lambda image, prompt: 9.0,
    )
    report = run_eval(images, samples, scorers)
    row = report["samples"][0]
    assert set(row) == {"id", "subset", "ocr_acc", "ocr_ned",
                        "clip", "vqa", "style", "faith"}
    assert row["vqa"] == 0.83
    assert row["style"] == 0.7
    assert row["faith"] == 0.9
    assert 0.0 <= row["clip"] <= 2.5


def test_run_eval_per_subset_grouping():
    samples = fixture_samples()
    images = {s.id: "" if s.language == "zh" else s.target_text for s in samples}
    report = run_eval(images, samples, EvalScorers(ocr=lambda image: image))
    per = report["aggregates"]["per_subset"]
    assert per["GlyphForge-Zh (Easy)"]["ocr_acc"] == 0.0
    assert per["GlyphForge-En (Easy)"]["ocr_acc"] == 1.0


def test_fixture_stats_frozen_values():
    stats = compute_stats(fixture_samples())
    total = stats["Total / Average"]
    assert total["count"] == 6
    samples = fixture_samples()
    want_text = round(sum(len(s.target_text) for s in samples) / 6, 2)
    want_prompt = round(sum(len(s.prompt) for s in samples) / 6, 2)
    assert total["avg_text_len"] == want_text == 8.17
    assert total["avg_prompt_len"] == want_prompt == 50.17
