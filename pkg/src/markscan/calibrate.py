"""Reproducible replacement for hand-tuned classifier thresholds.

Grid-searches the mark classifier's thresholds on a labeled synthetic corpus
(maximizing balanced accuracy over marked vs. empty squares), then picks
separating thresholds for blackout squares and cancel circles. The winning
values are written back into a template file.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import pipeline
from .layout import Calibration, CancelMode, LayoutTemplate
from .raster import BinaryImage, glyph_features, load_image

MIN_SQUARES = 100

_HOLE_MIN_GRID = (2, 3, 4, 5, 6)
_AREA_MIN_GRID = tuple(round(x, 3) for x in np.arange(0.32, 0.62, 0.02))
_COMBO_GRID = (2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0)


class CalibrationError(RuntimeError):
    pass


@dataclass
class LabeledFeatures:
    # squares: marked vs empty (blackout squares kept separately)
    holeness: np.ndarray
    fill: np.ndarray
    marked: np.ndarray          # bool labels
    blackout_fills: list[float]
    circle_fills_empty: list[float]
    circle_fills_full: list[float]


@dataclass
class CalibrationResult:
    calibration: Calibration
    balanced_accuracy: float
    confusion: dict  # {"tp": .., "fn": .., "fp": .., "tn": ..}
    square_count: int
    suspicious: bool


def collect_features(corpus_dir, template: LayoutTemplate) -> LabeledFeatures:
    """Extract (features, label) pairs from every locatable row of a corpus."""
    corpus_dir = Path(corpus_dir)
    holes: list[int] = []
    fills: list[float] = []
    marked: list[bool] = []
    blackout_fills: list[float] = []
    circ_empty: list[float] = []
    circ_full: list[float] = []
    cal = template.calibration
    for truth_path in sorted(corpus_dir.glob("sheet_*.truth.json")):
        truth = json.loads(truth_path.read_text(encoding="utf-8"))
        image_path = truth_path.with_name(
            truth_path.name.replace(".truth.json", ".png"))
        raw = load_image(image_path)
        binary, _ = pipeline.preprocess(raw)
        try:
            origin = pipeline.find_origin(binary, template)
        except pipeline.OriginNotFound:
            continue
        regions = template.resolve_regions(*origin)
        index = 0
        for col_idx, region in enumerate(regions.columns):
            count = template.questions_per_column[col_idx]
            if (region.left < 0 or region.top < 0
                    or region.right > binary.width
                    or region.bottom > binary.height):
                index += count
                continue
            column = binary.crop(region.left, region.top,
                                 region.width, region.height)
            zone_x0 = (int(region.width * pipeline.CIRCLE_ZONE_FRACTION)
                       if template.cancel_mode is CancelMode.LEFT_CIRCLE else 0)
            for row in pipeline.split_rows(column, count):
                chosen = truth["chosen"][index]
                canceled = truth["canceled"][index]
                zone = BinaryImage(row.pixels[:, zone_x0:].copy())
                located = pipeline.locate_answer_squares(zone, cal)
                if not isinstance(located, pipeline.RowError):
                    for j, glyph in enumerate(located):
                        f = glyph_features(glyph)
                        is_blackout = (
                            template.cancel_mode is CancelMode.BLACKOUT
                            and canceled and j == chosen)
                        if is_blackout:
                            blackout_fills.append(f.fill_ratio)
                        else:
                            holes.append(f.holeness)
                            fills.append(f.fill_ratio)
                            marked.append(j == chosen)
                if template.cancel_mode is CancelMode.LEFT_CIRCLE:
                    circle = pipeline._find_circle(row, zone_x0,
                                                   cal.glyph_area_min)
                    if circle is not None:
                        (circ_full if canceled else circ_empty).append(
                            circle.fill_ratio)
                index += 1
    return LabeledFeatures(
        holeness=np.array(holes, dtype=np.float64),
        fill=np.array(fills, dtype=np.float64),
        marked=np.array(marked, dtype=bool),
        blackout_fills=blackout_fills,
        circle_fills_empty=circ_empty,
        circle_fills_full=circ_full,
    )


def _balanced_accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    pos = truth.sum()
    neg = truth.size - pos
    recall = (pred & truth).sum() / pos if pos else 1.0
    specificity = (~pred & ~truth).sum() / neg if neg else 1.0
    return (recall + specificity) / 2


def search_calibration(features: LabeledFeatures,
                       base: Calibration) -> CalibrationResult:
    if features.marked.size < MIN_SQUARES:
        raise CalibrationError(
            f"corpus too small: {features.marked.size} labeled squares "
            f"(need >= {MIN_SQUARES})")
    h, f, y = features.holeness, features.fill, features.marked
    w_hole, w_area = base.combo_weights
    best = (-1.0, None)
    for hole_min in _HOLE_MIN_GRID:
        cond_a = h >= hole_min
        for area_min in _AREA_MIN_GRID:
            cond_b = f >= area_min
            for combo in _COMBO_GRID:
                pred = cond_a | cond_b | (w_hole * h + w_area * f >= combo)
                score = _balanced_accuracy(pred, y)
                if score > best[0]:
                    best = (score, (hole_min, area_min, combo))
    score, (hole_min, area_min, combo) = best

    blackout_min = base.blackout_min_fraction
    if features.blackout_fills:
        ceiling = max(float(f[y].max()) if y.any() else 0.0, area_min)
        floor = min(features.blackout_fills)
        if floor > ceiling:
            blackout_min = round((ceiling + floor) / 2, 4)
    blackout_min = max(blackout_min, area_min + 0.01)

    circle_min = base.circle_full_min_fraction
    if features.circle_fills_full and features.circle_fills_empty:
        lo = max(features.circle_fills_empty)
        hi = min(features.circle_fills_full)
        if hi > lo:
            circle_min = round((lo + hi) / 2, 4)

    pred = ((h >= hole_min) | (f >= area_min)
            | (w_hole * h + w_area * f >= combo))
    confusion = {
        "tp": int((pred & y).sum()), "fn": int((~pred & y).sum()),
        "fp": int((pred & ~y).sum()), "tn": int((~pred & ~y).sum()),
    }
    calibration = dataclasses.replace(
        base, hole_min=int(hole_min), area_min_fraction=float(area_min),
        combo_threshold=float(combo),
        blackout_min_fraction=float(blackout_min),
        circle_full_min_fraction=float(circle_min))
    return CalibrationResult(calibration=calibration,
                             balanced_accuracy=float(score),
                             confusion=confusion,
                             square_count=int(y.size),
                             suspicious=score < 0.75)


def calibrate_template(corpus_dir, template: LayoutTemplate) -> tuple[LayoutTemplate, CalibrationResult]:
    features = collect_features(corpus_dir, template)
    result = search_calibration(features, template.calibration)
    updated = dataclasses.replace(template, calibration=result.calibration)
    return updated, result
