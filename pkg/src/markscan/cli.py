"""Command-line entry point: recognize, generate, barcode, calibrate, review."""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import barcode, synthgen
from .calibrate import CalibrationError, calibrate_template
from .jobs import JobStore
from .layout import TemplateError, load_template, serialize_template

EXIT_OK = 0
EXIT_PROCESSING_ERRORS = 1
EXIT_USAGE = 2

DEFAULT_JOBS_DIR = "jobs"


def _jobs_dir(explicit) -> Path:
    if explicit:
        return Path(explicit)
    return Path(os.environ.get("MARKSCAN_JOBS", DEFAULT_JOBS_DIR))


@click.group()
def main() -> None:
    """Optical mark recognition for multiple-choice test sheets."""


@main.command()
@click.argument("inputs", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--template", "template_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--output", "output_dir", default=None,
              type=click.Path(file_okay=False, path_type=Path),
              help="Jobs directory (default: $MARKSCAN_JOBS or ./jobs).")
def recognize(inputs, template_path, output_dir) -> None:
    """Recognize sheets and persist one job per input image."""
    try:
        template = load_template(template_path)
    except TemplateError as exc:
        raise click.UsageError(str(exc))
    store = JobStore(_jobs_dir(output_dir))
    had_fatal = False
    for path in inputs:
        try:
            record = store.ingest(path, template)
        except OSError as exc:
            click.echo(f"{path}: FATAL {exc}")
            had_fatal = True
            continue
        if record.error is not None:
            click.echo(f"{path}: job {record.job_id} FATAL {record.error}")
            had_fatal = True
            continue
        answers = record.final_answers()
        answered = sum(1 for row in answers if any(row))
        barcodes = [b.get("value", "error") for b in record.report["barcodes"]]
        click.echo(
            f"{path}: job {record.job_id} state={record.state.value} "
            f"answers={answered}/{len(answers)} barcodes={barcodes} "
            f"flags={record.flag_count}")
    sys.exit(EXIT_PROCESSING_ERRORS if had_fatal else EXIT_OK)


@main.command()
@click.option("--count", type=int, required=True)
@click.option("--template", "template_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--output", "output_dir", required=True,
              type=click.Path(file_okay=False, path_type=Path))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--rotation-min", type=float, default=0.0, show_default=True)
@click.option("--rotation-max", type=float, default=0.0, show_default=True)
@click.option("--speckle-max", type=float, default=0.0, show_default=True)
@click.option("--jitter-max", type=int, default=0, show_default=True)
@click.option("--barcode-damage-max", type=int, default=0, show_default=True)
@click.option("--answer-prob", type=float, default=1.0, show_default=True)
@click.option("--cancel-prob", type=float, default=0.0, show_default=True)
@click.option("--mark-style", default="sloppy_cross", show_default=True,
              type=click.Choice([s.value for s in synthgen.MarkStyle]))
def generate(count, template_path, output_dir, seed, rotation_min, rotation_max,
             speckle_max, jitter_max, barcode_damage_max, answer_prob,
             cancel_prob, mark_style) -> None:
    """Generate a synthetic ground-truth corpus."""
    if count < 1:
        raise click.UsageError("--count must be >= 1")
    try:
        template = load_template(template_path)
    except TemplateError as exc:
        raise click.UsageError(str(exc))
    ranges = synthgen.DegradationRanges(
        rotation=(rotation_min, rotation_max),
        speckle_max=speckle_max,
        stroke_jitter_max=jitter_max,
        barcode_damage_max=barcode_damage_max,
    )
    out = synthgen.generate_corpus(
        count, template, output_dir, ranges=ranges, seed=seed,
        answer_prob=answer_prob, cancel_prob=cancel_prob,
        mark_style=synthgen.MarkStyle(mark_style))
    click.echo(f"wrote {count} sheets to {out}")


@main.command("barcode")
@click.argument("action", type=click.Choice(["encode", "decode"]))
@click.argument("value")
def barcode_cmd(action, value) -> None:
    """Encode a decimal payload or decode a 26-char bit string."""
    if action == "encode":
        try:
            payload = int(value)
            bits = barcode.encode(payload)
        except (ValueError, barcode.CodecError) as exc:
            raise click.UsageError(str(exc))
        click.echo(barcode.bits_to_string(bits))
        return
    try:
        bits = barcode.string_to_bits(value)
    except barcode.CodecError as exc:
        raise click.UsageError(str(exc))
    outcome = barcode.decode_bits(bits)
    if isinstance(outcome, barcode.FrameError):
        click.echo(str(outcome))
        sys.exit(EXIT_PROCESSING_ERRORS)
    click.echo(str(outcome))


@main.command()
@click.argument("corpus", type=click.Path(exists=True, file_okay=False,
                                          path_type=Path))
@click.option("--template", "template_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--output", "output_path", required=True,
              type=click.Path(dir_okay=False, path_type=Path))
def calibrate(corpus, template_path, output_path) -> None:
    """Fit classifier thresholds on a labeled corpus and write a new template."""
    try:
        template = load_template(template_path)
    except TemplateError as exc:
        raise click.UsageError(str(exc))
    try:
        updated, result = calibrate_template(corpus, template)
    except CalibrationError as exc:
        click.echo(f"error: {exc}")
        sys.exit(EXIT_PROCESSING_ERRORS)
    output_path.write_text(serialize_template(updated), encoding="utf-8")
    c = result.confusion
    click.echo(f"squares: {result.square_count}")
    click.echo(f"balanced accuracy: {result.balanced_accuracy:.4f}")
    click.echo(f"confusion: tp={c['tp']} fn={c['fn']} fp={c['fp']} tn={c['tn']}")
    click.echo(f"wrote {output_path}")
    if result.suspicious:
        click.echo("warning: accuracy near chance; labels may be shuffled "
                   "or the corpus inconsistent")


@main.command()
@click.option("--jobs", "jobs_dir", default=None,
              type=click.Path(file_okay=False, path_type=Path))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8077, show_default=True)
def review(jobs_dir, host, port) -> None:
    """Serve the review API and (if built) the browser UI."""
    import uvicorn

    from .service import create_app, default_static_dir

    directory = _jobs_dir(jobs_dir)
    if not directory.exists():
        raise click.UsageError(f"jobs directory {directory} does not exist")
    app = create_app(directory, static_dir=default_static_dir())
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
