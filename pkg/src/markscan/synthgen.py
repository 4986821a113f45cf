"""Deterministic renderer of ground-truth test sheets with a degradation model.

Every render is a pure function of (spec, seed), so corpora regenerate
byte-identically. The defining contract: recognizing an undegraded rendered
sheet must reproduce the ground truth exactly.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image, ImageDraw

from . import barcode
from .layout import CancelMode, LayoutTemplate
from .raster import BinaryImage, GrayImage, Rect, rotate

MARGIN = 60          # white border around the printed content
ORIGIN_SIZE = 30     # solid origin square, the topmost-leftmost mark
BARCODE_INSET = 10   # bar placement inside a barcode region
OUTLINE_PX = 2       # stroke width of printed squares and circles

# Fraction of a row's width reserved for the cancel circle on left-circle
# layouts; must match the pipeline's zone rule.
CIRCLE_ZONE_FRACTION = 1 / 6


class SynthError(ValueError):
    """Invalid sheet spec or unwritable destination."""


class MarkStyle(enum.Enum):
    CROSS = "cross"
    FILL = "fill"
    SLOPPY_CROSS = "sloppy_cross"


@dataclass(frozen=True)
class SheetSpec:
    template: LayoutTemplate
    answers: tuple[Optional[int], ...]   # chosen square per question, or None
    cancels: tuple[bool, ...]
    barcode_values: tuple[int, ...]
    mark_style: MarkStyle = MarkStyle.CROSS
    seed: int = 0

    def __post_init__(self):
        n = self.template.question_count
        if len(self.answers) != n:
            raise SynthError(f"answers must have {n} entries")
        if len(self.cancels) != n:
            raise SynthError(f"cancels must have {n} entries")
        if any(a is not None and not 0 <= a < 5 for a in self.answers):
            raise SynthError("chosen index must be in 0..4")
        if len(self.barcode_values) != len(self.template.barcode_regions):
            raise SynthError("barcode_values must match template.barcode_regions")


@dataclass(frozen=True)
class DegradationParams:
    rotation: float = 0.0             # degrees, within the detectable range
    speckle_density: float = 0.0      # fraction of pixels flipped
    stroke_jitter: int = 0            # px of sloppy-cross endpoint jitter
    barcode_damage_strips: int = 0    # strips obliterated per barcode

    def __post_init__(self):
        if not -15.0 <= self.rotation <= 15.0:
            raise SynthError("rotation must be within [-15, 15] degrees")
        if not 0.0 <= self.speckle_density <= 0.01:
            raise SynthError("speckle_density must be within [0, 0.01]")
        if not 0 <= self.barcode_damage_strips <= 5:
            raise SynthError("barcode_damage_strips must be in 0..5")
        if self.stroke_jitter < 0:
            raise SynthError("stroke_jitter must be >= 0")


@dataclass(frozen=True)
class DegradationRanges:
    """Uniform sampling ranges for corpus generation."""

    rotation: tuple[float, float] = (0.0, 0.0)
    speckle_max: float = 0.0
    stroke_jitter_max: int = 0
    barcode_damage_max: int = 0

    def sample(self, rng: np.random.Generator) -> DegradationParams:
        return DegradationParams(
            rotation=float(rng.uniform(*self.rotation)),
            speckle_density=float(rng.uniform(0.0, self.speckle_max)),
            stroke_jitter=int(rng.integers(0, self.stroke_jitter_max + 1)),
            barcode_damage_strips=int(rng.integers(0, self.barcode_damage_max + 1)),
        )


def canvas_size(template: LayoutTemplate) -> tuple[int, int]:
    regions = list(template.columns) + list(template.barcode_regions)
    right = max(r.dx + r.width for r in regions)
    bottom = max(r.dy + r.height for r in regions)
    return MARGIN + right + MARGIN, MARGIN + bottom + MARGIN


def squares_zone_x0(template: LayoutTemplate, column_width: int) -> int:
    """Left edge of the answer-square zone within a row."""
    if template.cancel_mode is CancelMode.LEFT_CIRCLE:
        return int(column_width * CIRCLE_ZONE_FRACTION)
    return 0


def question_position(template: LayoutTemplate, index: int) -> tuple[int, int]:
    """Map a global (column-major) question index to (column, row)."""
    remaining = index
    for col, count in enumerate(template.questions_per_column):
        if remaining < count:
            return col, remaining
        remaining -= count
    raise SynthError(f"question index {index} out of range")


def square_rects(template: LayoutTemplate, index: int) -> list[Rect]:
    """Canvas-space rectangles of the 5 printed squares of one question."""
    col, row = question_position(template, index)
    region = template.columns[col]
    rows = template.questions_per_column[col]
    row_top = MARGIN + region.dy + row * region.height // rows
    row_bottom = MARGIN + region.dy + (row + 1) * region.height // rows
    row_h = row_bottom - row_top
    zone_x0 = squares_zone_x0(template, region.width)
    pitch = (region.width - zone_x0) // 5
    side = int(pitch * 0.6)
    inset_x = (pitch - side) // 2
    inset_y = (row_h - side) // 2
    left0 = MARGIN + region.dx + zone_x0
    return [Rect(left0 + j * pitch + inset_x, row_top + inset_y, side, side)
            for j in range(5)]


def circle_rect(template: LayoutTemplate, index: int) -> Rect:
    """Canvas-space bounding box of the cancel circle (left-circle layouts)."""
    col, row = question_position(template, index)
    region = template.columns[col]
    rows = template.questions_per_column[col]
    row_top = MARGIN + region.dy + row * region.height // rows
    row_bottom = MARGIN + region.dy + (row + 1) * region.height // rows
    row_h = row_bottom - row_top
    zone_x0 = squares_zone_x0(template, region.width)
    radius = max(4, int(zone_x0 * 0.225))
    cx = MARGIN + region.dx + zone_x0 // 2
    cy = row_top + row_h // 2
    return Rect(cx - radius, cy - radius, 2 * radius, 2 * radius)


def _draw_cross(draw: ImageDraw.ImageDraw, rect: Rect,
                jitter: int, rng: np.random.Generator) -> None:
    def j() -> int:
        return int(rng.integers(-jitter, jitter + 1)) if jitter else 0

    x0, y0 = rect.left, rect.top
    x1, y1 = rect.right - 1, rect.bottom - 1
    draw.line((x0 + j(), y0 + j(), x1 + j(), y1 + j()), fill=0, width=OUTLINE_PX)
    draw.line((x0 + j(), y1 + j(), x1 + j(), y0 + j()), fill=0, width=OUTLINE_PX)


def render_sheet(spec: SheetSpec,
                 stroke_jitter: int = 0) -> tuple[GrayImage, dict]:
    """Render a sheet and its ground truth. Deterministic for a fixed seed."""
    template = spec.template
    rng = np.random.default_rng(spec.seed)
    width, height = canvas_size(template)
    im = Image.new("L", (width, height), 255)
    draw = ImageDraw.Draw(im)

    draw.rectangle((MARGIN, MARGIN, MARGIN + ORIGIN_SIZE - 1,
                    MARGIN + ORIGIN_SIZE - 1), fill=0)

    for region, value in zip(template.barcode_regions, spec.barcode_values):
        bars = barcode.render_bars(value)
        if (bars.width + 2 * BARCODE_INSET > region.width
                or bars.height + 2 * BARCODE_INSET > region.height):
            raise SynthError("barcode does not fit its template region")
        left = MARGIN + region.dx + BARCODE_INSET
        top = MARGIN + region.dy + BARCODE_INSET
        block = Image.fromarray(np.where(bars.pixels, 0, 255).astype(np.uint8), "L")
        im.paste(block, (left, top))

    n = template.question_count
    matrix = [[0] * 5 for _ in range(n)]
    for q in range(n):
        rects = square_rects(template, q)
        chosen = spec.answers[q]
        canceled = spec.cancels[q]
        for jdx, r in enumerate(rects):
            box = (r.left, r.top, r.right - 1, r.bottom - 1)
            if (template.cancel_mode is CancelMode.BLACKOUT
                    and canceled and jdx == chosen):
                draw.rectangle(box, fill=0)  # blackout cancels the chosen square
                continue
            draw.rectangle(box, outline=0, width=OUTLINE_PX)
            if jdx == chosen:
                if spec.mark_style is MarkStyle.FILL:
                    draw.rectangle((r.left + 5, r.top + 5,
                                    r.right - 6, r.bottom - 6), fill=0)
                else:
                    jitter = stroke_jitter if spec.mark_style is MarkStyle.SLOPPY_CROSS else 0
                    _draw_cross(draw, r, jitter, rng)
        if template.cancel_mode is CancelMode.LEFT_CIRCLE:
            c = circle_rect(template, q)
            box = (c.left, c.top, c.right - 1, c.bottom - 1)
            if canceled:
                draw.ellipse(box, fill=0)
            else:
                draw.ellipse(box, outline=0, width=OUTLINE_PX)
        if chosen is not None and not canceled:
            matrix[q][chosen] = 1

    truth = {
        "schema": 1,
        "kind_id": template.kind_id,
        "chosen": [a for a in spec.answers],
        "canceled": list(spec.cancels),
        "answer_matrix": matrix,
        "barcodes": list(spec.barcode_values),
    }
    return GrayImage(np.asarray(im, dtype=np.uint8)), truth


def _damage_barcodes(pixels: np.ndarray, boxes: Sequence[Rect], strips: int,
                     rng: np.random.Generator) -> None:
    """Obliterate `strips` of the 5 voting strips of each barcode with black bands."""
    for box in boxes:
        window = pixels[box.top : box.bottom, box.left : box.right]
        ys, xs = np.nonzero(window < 128)
        if ys.size == 0:
            continue
        y0, y1 = int(ys.min()), int(ys.max()) + 1
        x0, x1 = int(xs.min()), int(xs.max()) + 1
        bar_h = y1 - y0
        chosen = rng.choice(5, size=min(strips, 5), replace=False)
        for s in sorted(int(c) for c in chosen):
            top = y0 + s * bar_h // 5 + 2
            bottom = y0 + (s + 1) * bar_h // 5 - 2
            if bottom > top:
                window[top:bottom, x0:x1] = 0


def degrade(image: GrayImage, params: DegradationParams, seed: int,
            barcode_boxes: Optional[Sequence[Rect]] = None) -> GrayImage:
    """Apply the degradation model deterministically.

    Barcode strip damage is drawn first so the blobs stay attached to the bars
    through the subsequent rotation (damage is ink on the page; rotation is a
    scanning artifact). With no explicit boxes, the whole ink extent is treated
    as one barcode, which suits standalone barcode-region images.
    """
    rng = np.random.default_rng(seed)
    pixels = image.pixels.copy()
    if params.barcode_damage_strips > 0:
        boxes = barcode_boxes
        if boxes is None:
            boxes = [Rect(0, 0, image.width, image.height)]
        _damage_barcodes(pixels, boxes, params.barcode_damage_strips, rng)
    out = GrayImage(pixels)
    if params.rotation != 0.0:
        out = rotate(out, params.rotation)
    if params.speckle_density > 0.0:
        flips = rng.random(out.pixels.shape) < params.speckle_density
        flipped = out.pixels.copy()
        flipped[flips] = 255 - flipped[flips]
        out = GrayImage(flipped)
    return out


def barcode_boxes(template: LayoutTemplate) -> list[Rect]:
    return [Rect(MARGIN + r.dx, MARGIN + r.dy, r.width, r.height)
            for r in template.barcode_regions]


def sample_spec(template: LayoutTemplate, rng: np.random.Generator,
                answer_prob: float = 1.0, cancel_prob: float = 0.0,
                mark_style: MarkStyle = MarkStyle.SLOPPY_CROSS,
                seed: int = 0) -> SheetSpec:
    """Uniformly sample answers, cancellations, and barcode payloads."""
    n = template.question_count
    answers = []
    cancels = []
    for _ in range(n):
        answered = rng.random() < answer_prob
        answers.append(int(rng.integers(0, 5)) if answered else None)
        cancels.append(bool(answered and rng.random() < cancel_prob))
    values = tuple(int(rng.integers(0, barcode.MAX_VALUE + 1))
                   for _ in template.barcode_regions)
    return SheetSpec(template=template, answers=tuple(answers),
                     cancels=tuple(cancels), barcode_values=values,
                     mark_style=mark_style, seed=seed)


def generate_corpus(count: int, template: LayoutTemplate, out_dir,
                    ranges: DegradationRanges = DegradationRanges(),
                    seed: int = 0, answer_prob: float = 1.0,
                    cancel_prob: float = 0.0,
                    mark_style: MarkStyle = MarkStyle.SLOPPY_CROSS) -> Path:
    """Write `count` sheets plus ground truth and a manifest; reproducible from seed."""
    if count < 1:
        raise SynthError("count must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .raster import save_png  # local import to keep module load light

    entries = []
    totals = {"marked_squares": 0, "non_marked_squares": 0, "canceled_questions": 0}
    for i in range(count):
        sheet_seed = seed ^ i
        rng = np.random.default_rng(sheet_seed)
        params = ranges.sample(rng)
        spec = sample_spec(template, rng, answer_prob=answer_prob,
                           cancel_prob=cancel_prob, mark_style=mark_style,
                           seed=sheet_seed)
        image, truth = render_sheet(spec, stroke_jitter=params.stroke_jitter)
        image = degrade(image, params, seed=sheet_seed,
                        barcode_boxes=barcode_boxes(template))
        image_name = f"sheet_{i:04d}.png"
        truth_name = f"sheet_{i:04d}.truth.json"
        save_png(image, out_dir / image_name)
        (out_dir / truth_name).write_text(
            json.dumps(truth, sort_keys=True) + "\n", encoding="utf-8")
        marked = sum(sum(row) for row in truth["answer_matrix"])
        totals["marked_squares"] += marked
        totals["non_marked_squares"] += 5 * template.question_count - marked
        totals["canceled_questions"] += sum(truth["canceled"])
        entries.append({
            "image": image_name,
            "truth": truth_name,
            "rotation": params.rotation,
            "speckle_density": params.speckle_density,
            "stroke_jitter": params.stroke_jitter,
            "barcode_damage_strips": params.barcode_damage_strips,
            "marked_squares": marked,
        })
    manifest = {
        "schema": 1,
        "kind_id": template.kind_id,
        "count": count,
        "seed": seed,
        "totals": totals,
        "sheets": entries,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return out_dir
