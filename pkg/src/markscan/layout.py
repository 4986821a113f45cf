"""Declarative sheet-layout templates.

A template describes one sheet kind entirely in pixels relative to the origin
mark: where the origin may be found, the four question columns, the barcode
regions, the cancellation protocol, and the classifier calibration. Templates
are immutable after load and freely shareable across threads.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .raster import Rect

SCHEMA_VERSION = 1
COLUMN_COUNT = 4
SQUARES_PER_ROW = 5


class TemplateError(ValueError):
    """Malformed or invariant-violating template document."""


class CancelMode(enum.Enum):
    BLACKOUT = "blackout"          # kind A: a fully blackened square cancels it
    LEFT_CIRCLE = "left_circle"    # kind B: a filled circle left of the row cancels it


@dataclass(frozen=True)
class RegionSpec:
    """A rectangle in pixels relative to the origin mark."""

    dx: int
    dy: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise TemplateError("region extents must be positive")

    def resolve(self, origin_x: int, origin_y: int) -> Rect:
        return Rect(self.dx + origin_x, self.dy + origin_y, self.width, self.height)


@dataclass(frozen=True)
class Calibration:
    hole_min: int
    area_min_fraction: float
    combo_weights: tuple[float, float]  # (w_hole, w_area)
    combo_threshold: float
    blackout_min_fraction: float
    circle_full_min_fraction: float
    squareness_max: int
    glyph_area_min: int
    bar_wide_min: int  # 0 = adaptive wide/narrow split

    def __post_init__(self):
        for name in ("hole_min", "area_min_fraction", "combo_threshold",
                     "blackout_min_fraction", "circle_full_min_fraction",
                     "squareness_max", "glyph_area_min", "bar_wide_min"):
            if getattr(self, name) < 0:
                raise TemplateError(f"calibration.{name} must be >= 0")
        if self.combo_weights == (0, 0):
            raise TemplateError("calibration.combo_weights must not both be 0")
        if self.blackout_min_fraction <= self.area_min_fraction:
            raise TemplateError(
                "calibration.blackout_min_fraction must exceed area_min_fraction")


@dataclass(frozen=True)
class LayoutTemplate:
    kind_id: str
    dpi: int
    origin_search: Rect
    origin_min_area: int
    barcode_regions: tuple[RegionSpec, ...]
    columns: tuple[RegionSpec, ...]
    questions_per_column: tuple[int, ...]
    cancel_mode: CancelMode
    calibration: Calibration
    squares_per_row: int = SQUARES_PER_ROW

    def __post_init__(self):
        if self.dpi <= 0:
            raise TemplateError("dpi must be positive")
        if len(self.columns) != COLUMN_COUNT:
            raise TemplateError(f"columns must have exactly {COLUMN_COUNT} entries")
        if len(self.questions_per_column) != COLUMN_COUNT:
            raise TemplateError(
                f"questions_per_column must have exactly {COLUMN_COUNT} entries")
        if any(q < 1 for q in self.questions_per_column):
            raise TemplateError("questions_per_column entries must be positive")
        if self.squares_per_row != SQUARES_PER_ROW:
            raise TemplateError(f"squares_per_row is fixed to {SQUARES_PER_ROW}")
        if self.origin_min_area < 0:
            raise TemplateError("origin_min_area must be >= 0")

    @property
    def question_count(self) -> int:
        return sum(self.questions_per_column)

    def resolve_regions(self, origin_x: int, origin_y: int) -> "ResolvedRegions":
        """Translate every region by the detected origin. Pure translation."""
        return ResolvedRegions(
            columns=tuple(c.resolve(origin_x, origin_y) for c in self.columns),
            barcodes=tuple(b.resolve(origin_x, origin_y) for b in self.barcode_regions),
        )


@dataclass(frozen=True)
class ResolvedRegions:
    columns: tuple[Rect, ...]
    barcodes: tuple[Rect, ...]


_RECT_FIELDS = {"left", "top", "width", "height"}
_REGION_FIELDS = {"dx", "dy", "width", "height"}
_CALIBRATION_FIELDS = {
    "hole_min", "area_min_fraction", "combo_weights", "combo_threshold",
    "blackout_min_fraction", "circle_full_min_fraction", "squareness_max",
    "glyph_area_min", "bar_wide_min",
}
_TEMPLATE_FIELDS = {
    "schema", "kind_id", "dpi", "origin_search", "origin_min_area",
    "barcode_regions", "columns", "questions_per_column", "squares_per_row",
    "cancel_mode", "calibration",
}


def _require_fields(obj: dict, allowed: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise TemplateError(f"{where} must be an object")
    unknown = set(obj) - allowed
    if unknown:
        raise TemplateError(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = allowed - set(obj)
    if missing:
        raise TemplateError(f"{where}: missing field(s) {sorted(missing)}")


def _parse_region(obj: dict, where: str) -> RegionSpec:
    _require_fields(obj, _REGION_FIELDS, where)
    try:
        return RegionSpec(int(obj["dx"]), int(obj["dy"]),
                          int(obj["width"]), int(obj["height"]))
    except TemplateError as exc:
        raise TemplateError(f"{where}: {exc}") from None


def parse_template(document: str) -> LayoutTemplate:
    """Parse and fully validate a template JSON document."""
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise TemplateError(f"template is not valid JSON: {exc}") from None
    _require_fields(data, _TEMPLATE_FIELDS, "template")
    if data["schema"] != SCHEMA_VERSION:
        raise TemplateError(f"schema: expected {SCHEMA_VERSION}, got {data['schema']!r}")

    _require_fields(data["origin_search"], _RECT_FIELDS, "origin_search")
    os_ = data["origin_search"]
    origin_search = Rect(int(os_["left"]), int(os_["top"]),
                         int(os_["width"]), int(os_["height"]))

    _require_fields(data["calibration"], _CALIBRATION_FIELDS, "calibration")
    cal = data["calibration"]
    weights = cal["combo_weights"]
    if not (isinstance(weights, list) and len(weights) == 2):
        raise TemplateError("calibration.combo_weights must be a 2-element list")
    try:
        calibration = Calibration(
            hole_min=int(cal["hole_min"]),
            area_min_fraction=float(cal["area_min_fraction"]),
            combo_weights=(float(weights[0]), float(weights[1])),
            combo_threshold=float(cal["combo_threshold"]),
            blackout_min_fraction=float(cal["blackout_min_fraction"]),
            circle_full_min_fraction=float(cal["circle_full_min_fraction"]),
            squareness_max=int(cal["squareness_max"]),
            glyph_area_min=int(cal["glyph_area_min"]),
            bar_wide_min=int(cal["bar_wide_min"]),
        )
    except TemplateError as exc:
        raise TemplateError(f"calibration: {exc}") from None

    try:
        mode = CancelMode(data["cancel_mode"])
    except ValueError:
        raise TemplateError(f"cancel_mode: unknown value {data['cancel_mode']!r}") from None

    if not isinstance(data["columns"], list):
        raise TemplateError("columns must be a list")
    if not isinstance(data["barcode_regions"], list):
        raise TemplateError("barcode_regions must be a list")
    columns = tuple(_parse_region(c, f"columns[{i}]")
                    for i, c in enumerate(data["columns"]))
    barcodes = tuple(_parse_region(b, f"barcode_regions[{i}]")
                     for i, b in enumerate(data["barcode_regions"]))

    return LayoutTemplate(
        kind_id=str(data["kind_id"]),
        dpi=int(data["dpi"]),
        origin_search=origin_search,
        origin_min_area=int(data["origin_min_area"]),
        barcode_regions=barcodes,
        columns=columns,
        questions_per_column=tuple(int(q) for q in data["questions_per_column"]),
        cancel_mode=mode,
        calibration=calibration,
        squares_per_row=int(data["squares_per_row"]),
    )


def load_template(path) -> LayoutTemplate:
    return parse_template(Path(path).read_text(encoding="utf-8"))


def serialize_template(template: LayoutTemplate) -> str:
    cal = template.calibration
    doc = {
        "schema": SCHEMA_VERSION,
        "kind_id": template.kind_id,
        "dpi": template.dpi,
        "origin_search": {
            "left": template.origin_search.left, "top": template.origin_search.top,
            "width": template.origin_search.width, "height": template.origin_search.height,
        },
        "origin_min_area": template.origin_min_area,
        "barcode_regions": [
            {"dx": r.dx, "dy": r.dy, "width": r.width, "height": r.height}
            for r in template.barcode_regions
        ],
        "columns": [
            {"dx": r.dx, "dy": r.dy, "width": r.width, "height": r.height}
            for r in template.columns
        ],
        "questions_per_column": list(template.questions_per_column),
        "squares_per_row": template.squares_per_row,
        "cancel_mode": template.cancel_mode.value,
        "calibration": {
            "hole_min": cal.hole_min,
            "area_min_fraction": cal.area_min_fraction,
            "combo_weights": list(cal.combo_weights),
            "combo_threshold": cal.combo_threshold,
            "blackout_min_fraction": cal.blackout_min_fraction,
            "circle_full_min_fraction": cal.circle_full_min_fraction,
            "squareness_max": cal.squareness_max,
            "glyph_area_min": cal.glyph_area_min,
            "bar_wide_min": cal.bar_wide_min,
        },
    }
    return json.dumps(doc, indent=2) + "\n"


def bundled_template(kind: str) -> LayoutTemplate:
    """Load one of the two reference templates shipped with the package."""
    name = f"{kind}.template.json"
    try:
        text = resources.files("markscan.templates").joinpath(name).read_text("utf-8")
    except FileNotFoundError:
        raise TemplateError(f"no bundled template named {kind!r}") from None
    return parse_template(text)
