"""Search jobs on a bounded worker pool with polling snapshots.

Status transitions are monotone (queued -> running -> done | failed) and
iteration counters never decrease between polls. Trajectory snapshots are
flushed at least every SNAPSHOT_EVERY iterations; cancellation is
cooperative through a per-job event checked on each iteration.
"""
from __future__ import annotations

import os
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..pgdsearch import SearchResult, SearchSpec, multi_start_search

SNAPSHOT_EVERY = 25


@dataclass
class SearchJob:
    job_id: str
    model_id: str
    status: str = "queued"
    iteration: int = 0
    restart: int = 0
    trajectory: list[dict] = field(default_factory=list)
    result: dict | None = None
    intervals: list[dict] | None = None
    point: list[float] | None = None
    error: str | None = None
    cancel: threading.Event = field(default_factory=threading.Event)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def snapshot(self, trajectory_from: int = 0) -> dict:
        with self.lock:
            total = len(self.trajectory)
            start = max(0, min(trajectory_from, total))
            return {
                "job_id": self.job_id,
                "status": self.status,
                "iteration": self.iteration,
                "restart": self.restart,
                "trajectory": list(self.trajectory[start:]),
                "trajectory_from": start,
                "trajectory_total": total,
                "result": self.result,
                "intervals": self.intervals,
                "point": self.point,
                "error": self.error,
            }


class JobManager:
    def __init__(self, max_workers: int | None = None):
        workers = max_workers or (os.cpu_count() or 1)
        self._pool = ThreadPoolExecutor(max_workers=workers)
        self._jobs: dict[str, SearchJob] = {}
        self._guard = threading.Lock()

    def get(self, job_id: str) -> SearchJob:
        with self._guard:
            if job_id not in self._jobs:
                raise KeyError(job_id)
            return self._jobs[job_id]

    def cancel(self, job_id: str) -> SearchJob:
        job = self.get(job_id)
        job.cancel.set()
        return job

    def submit_search(self, model_id: str, surrogate, spec: SearchSpec, finisher) -> str:
        """Queue a multi-start search. `finisher(result) -> (result_dict,
        point, intervals)` converts the winning run into wire form (raw
        units, final-point intervals); it runs on the worker thread."""
        job = SearchJob(job_id=uuid.uuid4().hex[:12], model_id=model_id)
        with self._guard:
            self._jobs[job.job_id] = job

        to_raw = surrogate.standardizer.inverse_x
        pending: list[tuple[np.ndarray, float]] = []

        def flush():
            # one batched forward per snapshot: the UI plots trajectories on
            # target axes, so each point carries its predicted targets
            xs = np.stack([x for x, _ in pending])
            ys = surrogate.standardizer.inverse_y(surrogate.predict_std(xs))
            points = [
                {"x": to_raw(x).tolist(), "y": y.tolist(), "loss": float(loss)}
                for (x, loss), y in zip(pending, ys)
            ]
            pending.clear()
            return points

        def on_step(restart: int, iteration: int, x_std: np.ndarray, loss: float) -> bool:
            pending.append((x_std.copy(), float(loss)))
            flushed = flush() if len(pending) >= SNAPSHOT_EVERY else None
            with job.lock:
                job.restart = restart
                job.iteration += 1
                if flushed:
                    job.trajectory.extend(flushed)
            return not job.cancel.is_set()

        def run():
            with job.lock:
                if job.cancel.is_set():
                    job.status = "failed"
                    job.error = "canceled"
                    return
                job.status = "running"
            try:
                result = multi_start_search(surrogate, spec, on_step=on_step)
                tail = flush() if pending else []
                with job.lock:
                    job.trajectory.extend(tail)
                if job.cancel.is_set():
                    with job.lock:
                        job.status = "failed"
                        job.error = "canceled"
                    return
                result_dict, point, intervals = finisher(result)
                with job.lock:
                    job.result = result_dict
                    job.point = point
                    job.intervals = intervals
                    job.status = "done"
            except Exception as exc:  # surfaced through polling, not logs
                with job.lock:
                    pending.clear()
                    job.status = "failed"
                    job.error = str(exc)

        self._pool.submit(run)
        return job.job_id


def result_to_raw_dict(result: SearchResult, surrogate) -> dict:
    """SearchResult in raw units for the wire, with predicted targets per point."""
    standardizer = surrogate.standardizer
    inv = standardizer.inverse_x
    xs = np.stack([x for x, _ in result.trajectory])
    ys = standardizer.inverse_y(surrogate.predict_std(xs))
    return {
        "x_start": inv(result.x_start).tolist(),
        "x_final": inv(result.x_final).tolist(),
        "loss_final": float(result.loss_final),
        "restart_index": result.restart_index,
        "trajectory": [
            {"x": inv(x).tolist(), "y": y.tolist(), "loss": float(loss)}
            for (x, loss), y in zip(result.trajectory, ys)
        ],
    }
