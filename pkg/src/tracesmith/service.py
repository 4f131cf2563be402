"""HTTP service: dataset upload, optimization jobs, live events, and stats."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field, field_validator

from tracesmith.data import EmptyDatasetError, TraceParseError, bounding_box, parse_dataset
from tracesmith.jobs import DONE, FAILED, JobManager, UnknownIdError
from tracesmith.metrics import (
    distance_histograms,
    metric_names,
    spatial_histogram,
    trip_pair_pmf,
)
from tracesmith.synopsis import uniform_grid

DEFAULT_UPLOAD_LIMIT = 50 * 1024 * 1024


class JobSpec(BaseModel):
    dataset_id: str
    epsilon: float = Field(gt=0)
    metric: str = "query"
    grid_n: int = Field(default=4, ge=1)
    trials: int = Field(default=3, ge=1)
    explorations: int = Field(default=100, ge=2)
    iterations: int = Field(default=100, ge=0)
    seed: int = 0

    @field_validator("metric")
    @classmethod
    def metric_must_resolve(cls, value: str) -> str:
        if value not in metric_names():
            raise ValueError(f"unknown metric {value!r}; valid: {', '.join(metric_names())}")
        return value


def create_app(
    storage_dir,
    *,
    max_workers: int = 2,
    upload_limit: int = DEFAULT_UPLOAD_LIMIT,
    frontend_dir: Optional[str] = None,
) -> FastAPI:
    manager = JobManager(storage_dir, max_workers=max_workers)
    app = FastAPI(title="tracesmith")
    app.state.manager = manager
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.post("/api/datasets")
    async def upload_dataset(request: Request):
        body = await request.body()
        if len(body) > upload_limit:
            raise HTTPException(
                status_code=413,
                detail=f"upload exceeds the {upload_limit} byte limit",
            )
        try:
            return manager.save_dataset(body.decode("utf-8"))
        except UnicodeDecodeError:
            raise HTTPException(status_code=400, detail="upload must be UTF-8 text") from None
        except (TraceParseError, EmptyDatasetError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None

    @app.post("/api/jobs")
    def create_job(spec: JobSpec):
        try:
            job_id = manager.create_job(spec.model_dump())
        except UnknownIdError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        return {"job_id": job_id}

    @app.get("/api/jobs/{job_id}")
    def job_status(job_id: str):
        return _job_or_404(manager, job_id).status()

    @app.get("/api/jobs/{job_id}/events")
    def job_events(job_id: str):
        _job_or_404(manager, job_id)

        def stream():
            for event in manager.subscribe(job_id):
                yield f"event: {event['type']}\ndata: {json.dumps(event)}\n\n"

        return StreamingResponse(
            stream(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    @app.get("/api/jobs/{job_id}/result")
    def job_result(job_id: str):
        job = _job_or_404(manager, job_id)
        if job.state == FAILED:
            return JSONResponse({"id": job.id, "state": FAILED, "error": job.error})
        if job.state != DONE:
            raise HTTPException(status_code=409, detail=f"job is {job.state}, not done")
        return json.loads(manager.result_path(job_id).read_text())

    @app.get("/api/jobs/{job_id}/synthetic")
    def job_synthetic(job_id: str):
        _require_done(manager, job_id)
        return FileResponse(
            manager.synthetic_path(job_id),
            media_type="text/plain",
            filename=f"{job_id}_synthetic.txt",
        )

    @app.get("/api/jobs/{job_id}/stats/heatmap")
    def stats_heatmap(job_id: str, bins: int = 10):
        if not (1 <= bins <= 200):
            raise HTTPException(status_code=422, detail="bins must be in [1, 200]")
        real, synthetic = _load_pair(manager, job_id)
        region = bounding_box(real)
        return {
            "bins": bins,
            "real": spatial_histogram(real, region, bins).tolist(),
            "synthetic": spatial_histogram(synthetic, region, bins).tolist(),
        }

    @app.get("/api/jobs/{job_id}/stats/tripdist")
    def stats_tripdist(job_id: str, grid_n: int = 6):
        if not (1 <= grid_n <= 24):
            raise HTTPException(status_code=422, detail="grid_n must be in [1, 24]")
        real, synthetic = _load_pair(manager, job_id)
        grid = uniform_grid(bounding_box(real), grid_n)
        cells = grid.n_cells
        return {
            "grid_n": grid_n,
            "real": trip_pair_pmf(real, grid).reshape(cells, cells).tolist(),
            "synthetic": trip_pair_pmf(synthetic, grid).reshape(cells, cells).tolist(),
        }

    @app.get("/api/jobs/{job_id}/stats/distances")
    def stats_distances(job_id: str, buckets: int = 20):
        if not (1 <= buckets <= 200):
            raise HTTPException(status_code=422, detail="buckets must be in [1, 200]")
        real, synthetic = _load_pair(manager, job_id)
        real_hist, syn_hist, width = distance_histograms(real, synthetic, buckets)
        return {
            "buckets": buckets,
            "bucket_width": width,
            "real": real_hist.tolist(),
            "synthetic": syn_hist.tolist(),
        }

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app


def _job_or_404(manager: JobManager, job_id: str):
    try:
        return manager.get(job_id)
    except UnknownIdError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from None


def _require_done(manager: JobManager, job_id: str):
    job = _job_or_404(manager, job_id)
    if job.state != DONE:
        raise HTTPException(status_code=409, detail=f"job is {job.state}, not done")
    return job


def _load_pair(manager: JobManager, job_id: str):
    _require_done(manager, job_id)
    real = manager.load_dataset(_job_or_404(manager, job_id).spec["dataset_id"])
    synthetic = parse_dataset(manager.synthetic_path(job_id).read_text(encoding="utf-8"))
    return real, synthetic
