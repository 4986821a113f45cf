"""The recognition state machine.

preprocess -> find origin -> segment columns -> per-row square location with
adaptive recovery -> mark classification -> cancellation handling ->
RecognitionReport. Row-level failures never abort a sheet; they are flagged
and routed to human review. Only an undecodable image, a resolution mismatch,
or a missing origin mark is fatal.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import barcode
from .layout import Calibration, CancelMode, LayoutTemplate
from .raster import (BinaryImage, Glyph, GlyphFeatures, GrayImage, Rect,
                     close_gaps, connected_components, estimate_skew,
                     glyph_features, otsu_threshold, rotate, to_grayscale)

SKEW_RANGE_DEG = 15.0

# Fraction of a row's width reserved for the cancel circle on left-circle
# layouts; the synthetic renderer uses the same rule.
CIRCLE_ZONE_FRACTION = 1 / 6

# Adaptive retry constants: a printed square is ~0.6 of the cell pitch wide.
_SQUARE_WIDTH_FRAC = 0.6
_SPLIT_WIDTH_FACTOR = 1.6
_MERGE_GAP_FRAC = 0.25


class SheetError(RuntimeError):
    """Sheet-level fatal failure."""


class OriginNotFound(SheetError):
    pass


class MarkState(enum.Enum):
    EMPTY = "empty"
    CHOSEN = "chosen"
    BLACKED_OUT = "blacked_out"


@dataclass(frozen=True)
class RowError:
    """Square location failed: the retry schedule never produced exactly 5."""

    found: int


@dataclass(frozen=True)
class QuestionResult:
    question_index: int
    marks: tuple[MarkState, ...]
    canceled: bool
    flagged: bool
    flag_reason: Optional[str]
    square_boxes: tuple[Optional[Rect], ...]

    def __post_init__(self):
        if self.flagged and not self.flag_reason:
            raise ValueError("flagged question requires a flag_reason")

    @property
    def matrix_row(self) -> list[int]:
        if self.canceled:
            return [0] * 5
        return [1 if m is MarkState.CHOSEN else 0 for m in self.marks]


@dataclass(frozen=True)
class RecognitionReport:
    kind_id: str
    origin: tuple[int, int]
    skew_applied: float
    questions: tuple[QuestionResult, ...]
    barcodes: tuple[Union[int, barcode.RegionError], ...]

    @property
    def answer_matrix(self) -> list[list[int]]:
        return [q.matrix_row for q in self.questions]

    @property
    def flagged_questions(self) -> list[int]:
        return [q.question_index for q in self.questions if q.flagged]


def _deskewed_binary(raw: Union[GrayImage, np.ndarray]) -> tuple[BinaryImage, float]:
    gray = raw if isinstance(raw, GrayImage) else to_grayscale(raw)
    binary, _ = otsu_threshold(gray)
    est = estimate_skew(binary, -SKEW_RANGE_DEG, SKEW_RANGE_DEG)
    if not est.low_confidence and est.angle != 0.0:
        binary = rotate(binary, -est.angle)
    return binary, (0.0 if est.low_confidence else est.angle)


def preprocess(raw: Union[GrayImage, np.ndarray]) -> tuple[BinaryImage, float]:
    """Grayscale, Otsu, deskew over [-15, 15], and close 1-px noise gaps."""
    binary, skew = _deskewed_binary(raw)
    return close_gaps(binary), skew


def find_origin(binary: BinaryImage, template: LayoutTemplate) -> tuple[int, int]:
    """Locate the origin mark: the qualifying glyph nearest to (0, 0)."""
    search = template.origin_search
    best: Optional[tuple[float, int, int]] = None
    for glyph in connected_components(binary):
        x, y = glyph.bbox.left, glyph.bbox.top
        if not (search.left <= x < search.right and search.top <= y < search.bottom):
            continue
        if glyph.black_area < template.origin_min_area:
            continue
        key = (float(x * x + y * y), y, x)
        if best is None or key < best:
            best = key
    if best is None:
        raise OriginNotFound("no origin candidate inside the search window")
    return best[2], best[1]


def split_rows(column: BinaryImage, count: int) -> list[BinaryImage]:
    """Split a column into `count` contiguous equal-height rows (floor boundaries)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if column.height < count:
        raise ValueError("column shorter than the requested row count")
    h = column.height
    rows = []
    for i in range(count):
        top = i * h // count
        bottom = (i + 1) * h // count
        rows.append(BinaryImage(column.pixels[top:bottom].copy()))
    return rows


def _merge_glyphs(a: Glyph, b: Glyph) -> Glyph:
    left = min(a.bbox.left, b.bbox.left)
    top = min(a.bbox.top, b.bbox.top)
    right = max(a.bbox.right, b.bbox.right)
    bottom = max(a.bbox.bottom, b.bbox.bottom)
    mask = np.zeros((bottom - top, right - left), dtype=bool)
    for g in (a, b):
        mask[g.bbox.top - top : g.bbox.bottom - top,
             g.bbox.left - left : g.bbox.right - left] |= g.mask
    return Glyph(bbox=Rect(left, top, right - left, bottom - top),
                 mask=mask, label=a.label)


def _tighten(mask: np.ndarray, left: int, top: int, label: int) -> Optional[Glyph]:
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return None
    y0, y1 = int(ys.min()), int(ys.max()) + 1
    x0, x1 = int(xs.min()), int(xs.max()) + 1
    return Glyph(bbox=Rect(left + x0, top + y0, x1 - x0, y1 - y0),
                 mask=mask[y0:y1, x0:x1].copy(), label=label)


def _split_wide(glyph: Glyph, pitch: float) -> list[Glyph]:
    """Cut an over-wide glyph at expected pitch boundaries."""
    cuts = []
    k = 1
    while k * pitch < glyph.bbox.right:
        x = int(round(k * pitch))
        if glyph.bbox.left < x < glyph.bbox.right:
            cuts.append(x - glyph.bbox.left)
        k += 1
    if not cuts:
        return [glyph]
    pieces = []
    prev = 0
    for cut in cuts + [glyph.bbox.width]:
        part = np.zeros_like(glyph.mask)
        part[:, prev:cut] = glyph.mask[:, prev:cut]
        piece = _tighten(part, glyph.bbox.left, glyph.bbox.top, glyph.label)
        if piece is not None:
            pieces.append(piece)
        prev = cut
    return pieces


def locate_answer_squares(row: BinaryImage,
                          calibration: Calibration) -> Union[list[Glyph], RowError]:
    """Find exactly 5 answer-square glyphs in a row, left to right.

    When the initial component pass disagrees, a fixed 4-pass recovery
    schedule runs: drop tiny glyphs, drop non-square glyphs, merge
    near-adjacent fragments, split over-wide blobs at pitch boundaries.
    Exhaustion yields a RowError carrying the initial component count.
    """
    glyphs = sorted(connected_components(row), key=lambda g: g.bbox.left)
    initial_count = len(glyphs)
    if initial_count == 5:
        return glyphs
    pitch = row.width / 5

    glyphs = [g for g in glyphs if g.black_area >= calibration.glyph_area_min]
    if len(glyphs) == 5:
        return glyphs

    glyphs = [g for g in glyphs
              if abs(g.bbox.height - g.bbox.width) <= calibration.squareness_max]
    if len(glyphs) == 5:
        return glyphs

    max_gap = pitch * _MERGE_GAP_FRAC
    merged: list[Glyph] = []
    for g in glyphs:
        if merged and g.bbox.left - merged[-1].bbox.right < max_gap:
            merged[-1] = _merge_glyphs(merged[-1], g)
        else:
            merged.append(g)
    glyphs = merged
    if len(glyphs) == 5:
        return glyphs

    wide_limit = _SPLIT_WIDTH_FACTOR * _SQUARE_WIDTH_FRAC * pitch
    split: list[Glyph] = []
    for g in glyphs:
        if g.bbox.width > wide_limit:
            split.extend(_split_wide(g, pitch))
        else:
            split.append(g)
    glyphs = sorted(split, key=lambda g: g.bbox.left)
    if len(glyphs) == 5:
        return glyphs

    return RowError(found=initial_count)


def classify_square(features: GlyphFeatures, calibration: Calibration) -> MarkState:
    """Three-way square verdict from hole count and fill ratio.

    Blacked-out squares are solid ink; a chosen square satisfies any of the
    three sub-conditions: enough holes, enough ink, or a weighted combination
    of the two.
    """
    if (features.fill_ratio >= calibration.blackout_min_fraction
            and features.holeness == 0):
        return MarkState.BLACKED_OUT
    w_hole, w_area = calibration.combo_weights
    if (features.holeness >= calibration.hole_min
            or features.fill_ratio >= calibration.area_min_fraction
            or w_hole * features.holeness + w_area * features.fill_ratio
            >= calibration.combo_threshold):
        return MarkState.CHOSEN
    return MarkState.EMPTY


def _find_circle(row: BinaryImage, zone_x0: int,
                 min_area: int) -> Optional[GlyphFeatures]:
    pixels = row.pixels[:, :zone_x0]
    if pixels.size == 0 or not pixels.any():
        return None
    candidates = [g for g in connected_components(BinaryImage(pixels.copy()))
                  if g.black_area >= min_area]
    if not candidates:
        return None
    return glyph_features(max(candidates, key=lambda g: g.black_area))


def resolve_question(question_index: int, marks: tuple[MarkState, ...],
                     template: LayoutTemplate,
                     circle: Optional[GlyphFeatures],
                     square_boxes: tuple[Optional[Rect], ...]) -> QuestionResult:
    """Apply the cancellation protocol and ambiguity flags to classified marks."""
    cal = template.calibration
    canceled = False
    flagged = False
    reason: Optional[str] = None

    if template.cancel_mode is CancelMode.BLACKOUT:
        blacked = [m is MarkState.BLACKED_OUT for m in marks]
        canceled = any(blacked)
    else:
        if circle is None:
            flagged, reason = True, "circle not found"
        elif circle.fill_ratio >= cal.circle_full_min_fraction:
            canceled = True

    chosen_count = sum(1 for m in marks if m is MarkState.CHOSEN)
    if not flagged and chosen_count >= 2:
        flagged, reason = True, "multiple marks"
    if (not flagged and template.cancel_mode is CancelMode.BLACKOUT
            and canceled and chosen_count >= 1):
        # A blackout next to a surviving mark is ambiguous; let a human decide.
        flagged, reason = True, "blackout plus mark"

    return QuestionResult(question_index=question_index, marks=marks,
                          canceled=canceled, flagged=flagged,
                          flag_reason=reason, square_boxes=square_boxes)


def _row_error_result(index: int, reason: str) -> QuestionResult:
    return QuestionResult(question_index=index,
                          marks=(MarkState.EMPTY,) * 5,
                          canceled=False, flagged=True, flag_reason=reason,
                          square_boxes=(None,) * 5)


def recognize_sheet(raw: Union[GrayImage, np.ndarray],
                    template: LayoutTemplate) -> RecognitionReport:
    """Run the full pipeline over one sheet image."""
    report, _ = recognize_sheet_detailed(raw, template)
    return report


def recognize_sheet_detailed(
        raw: Union[GrayImage, np.ndarray],
        template: LayoutTemplate) -> tuple[RecognitionReport, BinaryImage]:
    """recognize_sheet plus the deskewed binary the report's boxes refer to."""
    raw_binary, skew_applied = _deskewed_binary(raw)
    # Closing heals speckle damage for mark analysis, but would bridge
    # adjacent barcode bars, so barcode regions read the unclosed image.
    binary = close_gaps(raw_binary)
    origin = find_origin(binary, template)
    regions = template.resolve_regions(*origin)
    cal = template.calibration

    questions: list[QuestionResult] = []
    index = 0
    for col_idx, region in enumerate(regions.columns):
        count = template.questions_per_column[col_idx]
        if (region.left < 0 or region.top < 0
                or region.right > binary.width or region.bottom > binary.height):
            for _ in range(count):
                questions.append(_row_error_result(
                    index, f"column {col_idx} outside image bounds"))
                index += 1
            continue
        column = binary.crop(region.left, region.top, region.width, region.height)
        zone_x0 = (int(region.width * CIRCLE_ZONE_FRACTION)
                   if template.cancel_mode is CancelMode.LEFT_CIRCLE else 0)
        for row_idx, row in enumerate(split_rows(column, count)):
            row_top = region.top + row_idx * region.height // count
            zone = BinaryImage(row.pixels[:, zone_x0:].copy())
            located = locate_answer_squares(zone, cal)
            if isinstance(located, RowError):
                questions.append(_row_error_result(
                    index, f"found {located.found} squares"))
                index += 1
                continue
            marks = tuple(classify_square(glyph_features(g), cal) for g in located)
            boxes = tuple(
                g.bbox.translated(region.left + zone_x0, row_top) for g in located)
            circle = None
            if template.cancel_mode is CancelMode.LEFT_CIRCLE:
                circle = _find_circle(row, zone_x0, cal.glyph_area_min)
            questions.append(resolve_question(index, marks, template, circle, boxes))
            index += 1

    barcodes: list[Union[int, barcode.RegionError]] = []
    for region in regions.barcodes:
        if (region.left < 0 or region.top < 0
                or region.right > binary.width or region.bottom > binary.height):
            barcodes.append(barcode.RegionError(
                (barcode.FrameError("length", "region outside image bounds"),) * 5))
            continue
        crop = raw_binary.crop(region.left, region.top, region.width, region.height)
        barcodes.append(barcode.decode_region(crop, cal.bar_wide_min))

    report = RecognitionReport(kind_id=template.kind_id, origin=origin,
                               skew_applied=skew_applied,
                               questions=tuple(questions),
                               barcodes=tuple(barcodes))
    return report, binary


def report_to_dict(report: RecognitionReport) -> dict:
    """Serialize a report to the documented JSON schema (schema 1)."""
    def rect_to_list(r: Optional[Rect]):
        return None if r is None else [r.left, r.top, r.width, r.height]

    def barcode_entry(b):
        if isinstance(b, int):
            return {"value": b}
        return {"error": "no consensus",
                "strips": [o if isinstance(o, int) else str(o)
                           for o in b.strip_outcomes]}

    return {
        "schema": 1,
        "kind_id": report.kind_id,
        "origin": {"x": report.origin[0], "y": report.origin[1]},
        "skew_applied": report.skew_applied,
        "questions": [
            {
                "question_index": q.question_index,
                "marks": [m.value for m in q.marks],
                "canceled": q.canceled,
                "flagged": q.flagged,
                "flag_reason": q.flag_reason,
                "square_boxes": [rect_to_list(r) for r in q.square_boxes],
            }
            for q in report.questions
        ],
        "answer_matrix": report.answer_matrix,
        "barcodes": [barcode_entry(b) for b in report.barcodes],
        "flagged_questions": report.flagged_questions,
    }
