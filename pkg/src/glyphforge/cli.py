"""Command-line surface: render, inject, refine, eval, stats, ablate."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np
from PIL import Image

from .bench import (
    BenchSample,
    EvalScorers,
    ManifestError,
    ablation_improvement,
    compute_stats,
    fixture_manifest_path,
    load_manifest,
    run_eval,
)
from .fonts import default_registry
from .metrics import HashEmbeddingScorer
from .pipeline import PipelineConfig, StageError, run_pipeline
from .renderer import RenderError, render_template
from .typography import PlanError, parse_plan
from .vlm import MockVlmBackend, RemoteVlmBackend

EXIT_VALIDATION = 2
EXIT_BACKEND = 3


def _parse_window(value: str) -> tuple[float, float]:
    try:
        lo, hi = value.split(":")
        return float(lo), float(hi)
    except ValueError:
        raise click.BadParameter("expected LO:HI, e.g. 0.2:0.8") from None


def _config(seed, steps, window, enhance, suppress, no_fd, no_reweight, no_refine):
    lo, hi = _parse_window(window)
    return PipelineConfig(
        seed=seed, steps=steps, tau_start=lo, tau_end=hi,
        s_plus=enhance, s_minus=suppress,
        enable_fd=not no_fd, enable_reweight=not no_reweight,
        refine=not no_refine,
    )


def _backend(mock: bool):
    if mock:
        return MockVlmBackend()
    try:
        return RemoteVlmBackend()
    except RuntimeError as exc:
        click.echo(f"backend error: {exc}", err=True)
        sys.exit(EXIT_BACKEND)


def _sample_from_prompt(prompt: str) -> BenchSample:
    from .vlm import extract_quoted_text

    target = extract_quoted_text(prompt)
    return BenchSample(id="cli", subset="cli", language="en", prompt=prompt,
                       texts=(target,) if target else ("",))


pipeline_options = [
    click.option("--seed", default=0, show_default=True),
    click.option("--steps", default=20, show_default=True),
    click.option("--window", default="0.2:0.8", show_default=True),
    click.option("--enhance", default=2.0, show_default=True),
    click.option("--suppress", default=0.1, show_default=True),
    click.option("--no-fd", is_flag=True),
    click.option("--no-reweight", is_flag=True),
    click.option("--no-refine", is_flag=True),
    click.option("--mock", is_flag=True, help="Use the offline deterministic VLM mock."),
]


def with_pipeline_options(fn):
    for opt in reversed(pipeline_options):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Glyph-injection engine and evaluation toolkit."""


@main.command()
@click.option("--plan", "plan_path", type=click.Path(exists=True), required=True,
              help="Typography plan JSON.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--canvas", default=128, show_default=True)
def render(plan_path, out_path, canvas):
    """Render a typography plan to a glyph template PNG (plus mask)."""
    try:
        plan = parse_plan(Path(plan_path).read_text(encoding="utf-8"))
        registry = default_registry()
        image = np.full((canvas, canvas), 255, dtype=np.uint8)
        mask = np.zeros((canvas, canvas), dtype=bool)
        for region in plan.text_regions:
            tpl = render_template(region, canvas, canvas, registry)
            image = np.minimum(image, tpl.image)
            mask |= tpl.mask
    except (PlanError, RenderError) as exc:
        click.echo(f"validation error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    Image.fromarray(image, mode="L").save(out_path)
    mask_path = str(Path(out_path).with_suffix("")) + "_mask.png"
    Image.fromarray(mask.astype(np.uint8) * 255, mode="L").save(mask_path)
    click.echo(f"wrote {out_path} and {mask_path}")


@main.command()
@click.option("--prompt", required=True)
@click.option("--out", "out_dir", type=click.Path(), default="run", show_default=True)
@with_pipeline_options
def inject(prompt, out_dir, seed, steps, window, enhance, suppress,
           no_fd, no_reweight, no_refine, mock):
    """Run the full pipeline (extraction through refinement) for one prompt."""
    cfg = _config(seed, steps, window, enhance, suppress, no_fd, no_reweight, no_refine)
    backend = _backend(mock)
    try:
        report = run_pipeline(_sample_from_prompt(prompt), cfg, out_dir, backend)
    except StageError as exc:
        click.echo(f"pipeline failed: {exc}", err=True)
        sys.exit(EXIT_BACKEND)
    except (PlanError, RenderError, ValueError) as exc:
        click.echo(f"validation error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    click.echo(json.dumps(report["stages"]["glyph_injection"], sort_keys=True))


@main.command()
@click.option("--run-dir", type=click.Path(exists=True), required=True,
              help="Run directory produced by `inject`.")
@click.option("--prompt", required=True)
@click.option("--rounds", default=3, show_default=True)
@click.option("--mock", is_flag=True)
def refine(run_dir, prompt, rounds, mock):
    """Re-run refinement on an existing injected image."""
    from .pipeline import make_mock_judge, mock_refiner
    from .refinement import refine_loop
    from .segmentation import PixelMask

    backend = _backend(mock)
    run_path = Path(run_dir)
    injected = np.asarray(Image.open(run_path / "injected.png").convert("L"))
    mask_img = np.asarray(Image.open(run_path / "mask.png").convert("L"))
    mask = PixelMask(bits=mask_img > 127)
    judge = make_mock_judge(backend)
    refined, round_log = refine_loop(
        injected, prompt, mask, mock_refiner,
        lambda img, p: "Harmonize text color and texture with the background.",
        judge, max_rounds=rounds)
    Image.fromarray(np.asarray(refined, dtype=np.uint8)).save(run_path / "refined.png")
    click.echo(json.dumps(round_log, sort_keys=True))


@main.command("eval")
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--images", "images_dir", type=click.Path(exists=True), required=True,
              help="Directory of <sample-id>.png images.")
@click.option("--ocr-fixture", type=click.Path(exists=True),
              help="JSON map of sample id -> recognized text (offline OCR stand-in).")
@click.option("--report", "report_path", type=click.Path(), default="report.json",
              show_default=True)
def eval_cmd(manifest, images_dir, ocr_fixture, report_path):
    """Evaluate a set of generated images against a benchmark manifest."""
    try:
        samples = load_manifest(manifest)
    except ManifestError as exc:
        click.echo(f"manifest error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    images = {}
    for sample in samples:
        path = Path(images_dir) / f"{sample.id}.png"
        if path.exists():
            images[sample.id] = np.asarray(Image.open(path).convert("L"))
    if ocr_fixture:
        fixture = json.loads(Path(ocr_fixture).read_text(encoding="utf-8"))
        by_image = {id(images[k]): v for k, v in fixture.items() if k in images}
        ocr = lambda img: by_image.get(id(img), "")
    else:
        ocr = lambda img: ""
    report = run_eval(images, samples, EvalScorers(ocr=ocr, clip=HashEmbeddingScorer()))
    Path(report_path).write_text(
        json.dumps(report, sort_keys=True, ensure_ascii=False, indent=2),
        encoding="utf-8")
    click.echo(json.dumps(report["aggregates"]["total"], sort_keys=True))


@main.command()
@click.option("--manifest", type=click.Path(exists=True),
              help="Defaults to the shipped 6-sample fixture.")
def stats(manifest):
    """Per-subset benchmark statistics (counts, average text/prompt lengths)."""
    path = manifest or fixture_manifest_path()
    try:
        samples = load_manifest(path)
    except ManifestError as exc:
        click.echo(f"manifest error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    click.echo(json.dumps(compute_stats(samples), sort_keys=True, indent=2))


@main.command()
@click.option("--baseline", type=float, required=True)
@click.option("--variant", type=float, required=True)
def ablate(baseline, variant):
    """Percent improvement of a variant IoU over a baseline IoU."""
    try:
        click.echo(f"{ablation_improvement(baseline, variant):.1f}")
    except ValueError as exc:
        click.echo(f"validation error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)


if __name__ == "__main__":
    main()
