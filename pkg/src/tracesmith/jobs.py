"""Filesystem-backed job manager with an append-only per-job event log.

Jobs run on a bounded thread pool. Every observation becomes one event;
subscribers replay the full history and then tail live events, so consumers
can attach at any time. Specs, events, results, and datasets persist as flat
files, which keeps completed jobs readable across service restarts.
"""

from __future__ import annotations

import hashlib
import json
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterator, Optional

from tracesmith.bayesopt import OptimizerConfig
from tracesmith.data import bounding_box, parse_dataset, serialize_dataset
from tracesmith.runner import optimize_run, result_document

QUEUED = "queued"
EXPLORING = "exploring"
OPTIMIZING = "optimizing"
FINALIZING = "finalizing"
DONE = "done"
FAILED = "failed"

TERMINAL_STATES = (DONE, FAILED)


class UnknownIdError(KeyError):
    pass


class Job:
    """In-memory view of one job; the event log is append-only."""

    def __init__(self, job_id: str, spec: dict, directory: Path):
        self.id = job_id
        self.spec = spec
        self.directory = directory
        self.state = QUEUED
        self.error: Optional[str] = None
        self.events: list[dict] = []
        self.completed = 0
        self.total = int(spec["explorations"]) + int(spec["iterations"])
        self.cond = threading.Condition()

    @property
    def latest(self) -> Optional[dict]:
        for event in reversed(self.events):
            if event["type"] == "observation":
                return event
        return None

    def status(self) -> dict:
        return {
            "id": self.id,
            "state": self.state,
            "progress": {"completed": self.completed, "total": self.total},
            "latest": self.latest,
            "error": self.error,
        }


class JobManager:
    def __init__(self, storage_dir, max_workers: int = 2):
        self.storage = Path(storage_dir)
        self.datasets_dir = self.storage / "datasets"
        self.jobs_dir = self.storage / "jobs"
        self.datasets_dir.mkdir(parents=True, exist_ok=True)
        self.jobs_dir.mkdir(parents=True, exist_ok=True)
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()
        self._executor = ThreadPoolExecutor(max_workers=max_workers)
        self._recover_existing_jobs()

    def shutdown(self) -> None:
        self._executor.shutdown(wait=True)

    # --- datasets ---------------------------------------------------------

    def save_dataset(self, text: str) -> dict:
        dataset = parse_dataset(text)  # reject malformed uploads outright
        dataset_id = "d" + hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]
        path = self.datasets_dir / f"{dataset_id}.txt"
        if not path.exists():
            path.write_text(text, encoding="utf-8")
        box = bounding_box(dataset)
        return {
            "dataset_id": dataset_id,
            "cardinality": dataset.cardinality,
            "bbox": {
                "min_x": box.min_x,
                "min_y": box.min_y,
                "max_x": box.max_x,
                "max_y": box.max_y,
            },
        }

    def dataset_path(self, dataset_id: str) -> Path:
        path = self.datasets_dir / f"{dataset_id}.txt"
        if not path.exists():
            raise UnknownIdError(f"unknown dataset {dataset_id!r}")
        return path

    def load_dataset(self, dataset_id: str):
        return parse_dataset(self.dataset_path(dataset_id).read_text(encoding="utf-8"))

    # --- job lifecycle ----------------------------------------------------

    def create_job(self, spec: dict) -> str:
        self.dataset_path(spec["dataset_id"])  # fail fast on unknown datasets
        job_id = "j" + uuid.uuid4().hex[:12]
        directory = self.jobs_dir / job_id
        directory.mkdir(parents=True)
        (directory / "spec.json").write_text(json.dumps(spec, indent=2))
        job = Job(job_id, spec, directory)
        with self._lock:
            self._jobs[job_id] = job
        self._write_status(job)
        self._executor.submit(self._run, job)
        return job_id

    def get(self, job_id: str) -> Job:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise UnknownIdError(f"unknown job {job_id!r}")
        return job

    def result_path(self, job_id: str) -> Path:
        return self.get(job_id).directory / "result.json"

    def synthetic_path(self, job_id: str) -> Path:
        return self.get(job_id).directory / "synthetic.txt"

    def subscribe(self, job_id: str) -> Iterator[dict]:
        """Replay the job's event history, then tail until the terminal event."""
        job = self.get(job_id)
        index = 0
        while True:
            with job.cond:
                while index >= len(job.events):
                    job.cond.wait(timeout=1.0)
            while index < len(job.events):
                event = job.events[index]
                index += 1
                yield event
                if event["type"] in ("done", "failed"):
                    return

    # --- internals --------------------------------------------------------

    def _run(self, job: Job) -> None:
        try:
            dataset = self.load_dataset(job.spec["dataset_id"])
            self._set_state(job, EXPLORING)

            def sink(observation):
                event = observation.to_dict()
                event["type"] = "observation"
                with job.cond:
                    job.completed += 1
                    event["completed"] = job.completed
                    event["total"] = job.total
                    if observation.phase == "optimization" and job.state == EXPLORING:
                        job.state = OPTIMIZING
                self._append_event(job, event)
                self._write_status(job)

            config = OptimizerConfig(
                explorations=int(job.spec["explorations"]),
                iterations=int(job.spec["iterations"]),
                trials=int(job.spec["trials"]),
                seed=int(job.spec["seed"]),
            )
            state, synthetic, report, ledger = optimize_run(
                dataset,
                float(job.spec["epsilon"]),
                job.spec["metric"],
                config,
                grid_n=int(job.spec["grid_n"]),
                progress_sink=sink,
            )

            self._set_state(job, FINALIZING)
            (job.directory / "synthetic.txt").write_text(
                serialize_dataset(synthetic), encoding="utf-8"
            )
            document = result_document(
                job.spec, state, report, ledger,
                synthetic_ref=f"/api/jobs/{job.id}/synthetic",
            )
            document["job_id"] = job.id
            (job.directory / "result.json").write_text(json.dumps(document, indent=2))

            self._set_state(job, DONE)
            self._append_event(job, {"type": "done", "job_id": job.id})
        except Exception as exc:
            job.error = f"{type(exc).__name__}: {exc}"
            self._set_state(job, FAILED)
            self._append_event(job, {"type": "failed", "job_id": job.id, "error": job.error})

    def _set_state(self, job: Job, state: str) -> None:
        with job.cond:
            job.state = state
        self._write_status(job)

    def _append_event(self, job: Job, event: dict) -> None:
        with open(job.directory / "events.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event) + "\n")
        with job.cond:
            job.events.append(event)
            job.cond.notify_all()

    def _write_status(self, job: Job) -> None:
        with job.cond:
            status = job.status()
        (job.directory / "status.json").write_text(json.dumps(status, indent=2))

    def _recover_existing_jobs(self) -> None:
        """Reload persisted jobs; anything interrupted mid-run becomes failed."""
        for directory in sorted(self.jobs_dir.iterdir()) if self.jobs_dir.exists() else []:
            spec_path = directory / "spec.json"
            status_path = directory / "status.json"
            if not (spec_path.exists() and status_path.exists()):
                continue
            spec = json.loads(spec_path.read_text())
            status = json.loads(status_path.read_text())
            job = Job(directory.name, spec, directory)
            job.state = status.get("state", FAILED)
            job.error = status.get("error")
            job.completed = status.get("progress", {}).get("completed", 0)
            events_path = directory / "events.jsonl"
            if events_path.exists():
                job.events = [
                    json.loads(line)
                    for line in events_path.read_text().splitlines()
                    if line.strip()
                ]
            if job.state not in TERMINAL_STATES:
                job.state = FAILED
                job.error = "interrupted by service restart"
                job.events.append({"type": "failed", "job_id": job.id, "error": job.error})
                self._write_status(job)
            self._jobs[job.id] = job
