"""HTTP API backing the human review frontend.

All payloads are UTF-8 JSON; errors use 400/404/409 with {"error": string}.
Job mutation goes through the append-only journal in JobStore, so concurrent
corrections settle last-writer-wins per question.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .jobs import JobError, JobReadOnly, JobRecord, JobStore, UnknownJob


class CorrectionBody(BaseModel, extra="forbid"):
    chosen: Optional[int] = None
    canceled: bool = False


def _summary(record: JobRecord) -> dict:
    return {
        "job_id": record.job_id,
        "state": record.state.value,
        "flag_count": record.flag_count,
        "kind_id": record.report["kind_id"] if record.report else None,
        "error": record.error,
    }


def _detail(record: JobRecord) -> dict:
    doc = _summary(record)
    doc["report"] = record.report
    doc["corrections"] = record.corrections
    doc["final_answers"] = record.final_answers()
    return doc


def create_app(jobs_dir, static_dir=None) -> FastAPI:
    store = JobStore(jobs_dir)
    app = FastAPI(title="markscan review service")

    @app.exception_handler(UnknownJob)
    async def _unknown(request: Request, exc: UnknownJob):
        return JSONResponse({"error": f"unknown job {exc}"}, status_code=404)

    @app.exception_handler(JobReadOnly)
    async def _readonly(request: Request, exc: JobReadOnly):
        return JSONResponse({"error": f"job {exc} is resolved and read-only"},
                            status_code=409)

    @app.exception_handler(JobError)
    async def _joberror(request: Request, exc: JobError):
        return JSONResponse({"error": str(exc)}, status_code=400)

    @app.get("/api/jobs")
    def list_jobs():
        return [_summary(store.load(job_id)) for job_id in store.job_ids()]

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str):
        return _detail(store.load(job_id))

    @app.get("/api/jobs/{job_id}/image.png")
    def get_image(job_id: str):
        return Response(store.sheet_png(job_id), media_type="image/png")

    @app.get("/api/jobs/{job_id}/overlay.png")
    def get_overlay(job_id: str):
        return Response(store.overlay_png(job_id), media_type="image/png")

    @app.patch("/api/jobs/{job_id}/questions/{question_index}")
    def patch_question(job_id: str, question_index: int, body: CorrectionBody):
        record = store.append_correction(job_id, question_index,
                                         chosen=body.chosen,
                                         canceled=body.canceled)
        return _detail(record)

    @app.post("/api/jobs/{job_id}/resolve")
    def resolve(job_id: str):
        return _detail(store.resolve(job_id))

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    else:
        @app.get("/")
        def index():
            return {"service": "markscan review API",
                    "note": "review UI assets not installed; API is available"}

    return app


def default_static_dir() -> Optional[Path]:
    """Locate the built frontend (frontend/dist) next to a source checkout."""
    here = Path(__file__).resolve()
    for parent in here.parents:
        candidate = parent / "frontend" / "dist"
        if candidate.is_dir():
            return candidate
    return None
