"""Filesystem job persistence for recognition results and human corrections.

One directory per job, keyed by a content digest of the input image:

    <jobs_dir>/<job_id>/
        input.png          # byte-for-byte copy of the submitted image
        sheet.png          # deskewed sheet the report's boxes refer to
        template.json      # template the sheet was recognized with
        report.json        # RecognitionReport (schema 1), written atomically
        error.json         # present instead of report.json on fatal failure
        corrections.jsonl  # append-only journal of corrections and resolves

The report is immutable; the final answers are always the report overlaid
with the journal (last writer wins per question), so replaying the journal
reproduces them exactly.
"""

from __future__ import annotations

import enum
import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, ImageDraw

from . import pipeline
from .layout import LayoutTemplate, load_template, serialize_template
from .raster import GrayImage, load_image

JOB_ID_HEX_CHARS = 16

OVERLAY_COLORS = {
    "chosen": (0, 160, 0),
    "empty": (150, 150, 150),
    "blacked_out": (220, 0, 0),
    "canceled": (0, 80, 220),
    "flagged": (220, 0, 0),
}


class JobState(enum.Enum):
    RECOGNIZED = "recognized"
    NEEDS_REVIEW = "needs_review"
    RESOLVED = "resolved"


class JobError(RuntimeError):
    pass


class UnknownJob(JobError):
    pass


class JobReadOnly(JobError):
    """Mutation attempted on a resolved job."""


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)  # terminal rename marks the file complete
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class JobRecord:
    job_id: str
    path: Path
    report: Optional[dict]
    error: Optional[str]
    corrections: list[dict]
    resolved: bool

    @property
    def state(self) -> JobState:
        if self.resolved:
            return JobState.RESOLVED
        if self.report is None:
            return JobState.NEEDS_REVIEW if self.error else JobState.RECOGNIZED
        if self.report.get("flagged_questions"):
            return JobState.NEEDS_REVIEW
        return JobState.RESOLVED

    @property
    def flag_count(self) -> int:
        if self.report is None:
            return 0
        return len(self.report.get("flagged_questions", []))

    def final_answers(self) -> Optional[list[list[int]]]:
        """Report matrix with the journal overlaid, last writer wins."""
        if self.report is None:
            return None
        matrix = [list(row) for row in self.report["answer_matrix"]]
        latest: dict[int, dict] = {}
        for entry in self.corrections:
            if entry.get("type") == "correction":
                latest[int(entry["question_index"])] = entry
        for q, entry in latest.items():
            if not 0 <= q < len(matrix):
                continue
            row = [0] * 5
            if not entry.get("canceled") and entry.get("chosen") is not None:
                row[int(entry["chosen"])] = 1
            matrix[q] = row
        return matrix


class JobStore:
    """Directory-backed store; safe for concurrent readers and journaled writers."""

    def __init__(self, root) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def job_ids(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir()
                      if p.is_dir() and (p / "input.png").exists())

    def load(self, job_id: str) -> JobRecord:
        path = self.root / job_id
        if not (path / "input.png").exists():
            raise UnknownJob(job_id)
        report = None
        error = None
        report_path = path / "report.json"
        if report_path.exists():
            report = json.loads(report_path.read_text(encoding="utf-8"))
        elif (path / "error.json").exists():
            error = json.loads((path / "error.json").read_text(encoding="utf-8"))["error"]
        corrections = []
        resolved = False
        journal = path / "corrections.jsonl"
        if journal.exists():
            for line in journal.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                entry = json.loads(line)
                corrections.append(entry)
                if entry.get("type") == "resolve":
                    resolved = True
        return JobRecord(job_id=job_id, path=path, report=report, error=error,
                         corrections=corrections, resolved=resolved)

    def ingest(self, image_path, template: LayoutTemplate) -> JobRecord:
        """Recognize one sheet and persist it as a job.

        Idempotent: jobs are matched by content digest, and an existing job's
        journal (including resolutions) is left intact on re-ingest.
        """
        image_path = Path(image_path)
        data = image_path.read_bytes()
        job_id = hashlib.sha256(data).hexdigest()[:JOB_ID_HEX_CHARS]
        path = self.root / job_id
        if (path / "report.json").exists() or (path / "error.json").exists():
            return self.load(job_id)
        path.mkdir(parents=True, exist_ok=True)
        _atomic_write(path / "input.png", data)
        _atomic_write(path / "template.json",
                      serialize_template(template).encode("utf-8"))
        try:
            raw = load_image(image_path)
            self._check_dpi(image_path, template)
            report, binary = pipeline.recognize_sheet_detailed(raw, template)
        except (pipeline.SheetError, Exception) as exc:  # noqa: BLE001 - recorded per job
            _atomic_write(path / "error.json",
                          json.dumps({"error": str(exc)}).encode("utf-8"))
            return self.load(job_id)
        sheet = Image.fromarray(
            np.where(binary.pixels, 0, 255).astype(np.uint8), "L")
        buf = io.BytesIO()
        sheet.save(buf, format="PNG")
        _atomic_write(path / "sheet.png", buf.getvalue())
        _atomic_write(path / "report.json", json.dumps(
            pipeline.report_to_dict(report), indent=2).encode("utf-8"))
        return self.load(job_id)

    @staticmethod
    def _check_dpi(image_path: Path, template: LayoutTemplate) -> None:
        with Image.open(image_path) as im:
            dpi = im.info.get("dpi")
        if dpi is not None:
            rounded = (round(dpi[0]), round(dpi[1]))
            if rounded != (0, 0) and rounded != (template.dpi, template.dpi):
                raise pipeline.SheetError(
                    f"image resolution {rounded} does not match template "
                    f"dpi {template.dpi}")

    def append_correction(self, job_id: str, question_index: int,
                          chosen: Optional[int], canceled: bool,
                          author: str = "reviewer") -> JobRecord:
        record = self.load(job_id)
        if record.resolved:
            raise JobReadOnly(job_id)
        if record.report is None:
            raise JobError(f"job {job_id} has no report to correct")
        if not 0 <= question_index < len(record.report["questions"]):
            raise JobError(f"question index {question_index} out of range")
        if chosen is not None and not 0 <= chosen <= 4:
            raise JobError("chosen must be in 0..4 or null")
        entry = {
            "type": "correction",
            "question_index": question_index,
            "chosen": chosen,
            "canceled": bool(canceled),
            "author": author,
            "timestamp": _now_iso(),
        }
        self._append(job_id, entry)
        return self.load(job_id)

    def resolve(self, job_id: str, author: str = "reviewer") -> JobRecord:
        record = self.load(job_id)
        if record.resolved:
            return record
        self._append(job_id, {"type": "resolve", "author": author,
                              "timestamp": _now_iso()})
        return self.load(job_id)

    def _append(self, job_id: str, entry: dict) -> None:
        journal = self.root / job_id / "corrections.jsonl"
        with open(journal, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def sheet_png(self, job_id: str) -> bytes:
        path = self.root / job_id / "sheet.png"
        if not path.exists():
            path = self.root / job_id / "input.png"
        if not path.exists():
            raise UnknownJob(job_id)
        return path.read_bytes()

    def template(self, job_id: str) -> LayoutTemplate:
        return load_template(self.root / job_id / "template.json")

    def overlay_png(self, job_id: str) -> bytes:
        """Deskewed sheet with per-square result boxes drawn on top."""
        record = self.load(job_id)
        if record.report is None:
            raise JobError(f"job {job_id} has no report")
        template = self.template(job_id)
        base = Image.open(io.BytesIO(self.sheet_png(job_id))).convert("RGB")
        draw = ImageDraw.Draw(base)
        report = record.report
        origin = (report["origin"]["x"], report["origin"]["y"])
        for q in report["questions"]:
            for mark, box in zip(q["marks"], q["square_boxes"]):
                if box is None:
                    continue
                left, top, w, h = box
                draw.rectangle((left - 2, top - 2, left + w + 1, top + h + 1),
                               outline=OVERLAY_COLORS[mark], width=2)
            row_box = _row_rect(template, origin, q["question_index"])
            if q["flagged"]:
                draw.rectangle(row_box, outline=OVERLAY_COLORS["flagged"], width=2)
            elif q["canceled"]:
                draw.rectangle(row_box, outline=OVERLAY_COLORS["canceled"], width=2)
        buf = io.BytesIO()
        base.save(buf, format="PNG")
        return buf.getvalue()


def _row_rect(template: LayoutTemplate, origin: tuple[int, int],
              index: int) -> tuple[int, int, int, int]:
    remaining = index
    for col, count in enumerate(template.questions_per_column):
        if remaining < count:
            region = template.columns[col].resolve(*origin)
            top = region.top + remaining * region.height // count
            bottom = region.top + (remaining + 1) * region.height // count
            return (region.left, top, region.right - 1, bottom - 1)
        remaining -= count
    raise JobError(f"question index {index} out of range")
