"""HTTP job service: persistent editing sessions, queued pipeline jobs, and
artifact serving.

Persistence is a plain directory tree with JSON indexes; jobs are file-shaped
artifacts already, so no database is involved and the store survives process
restarts. One worker pool (default width 1) drains the job queue; progress is
persisted every 25 inpainting iterations.
"""

from __future__ import annotations

import base64
import json
import logging
import queue
import threading
import time
import uuid
from contextlib import asynccontextmanager
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Form, HTTPException, UploadFile
from fastapi.responses import FileResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from . import __version__
from .errors import PipelineError, SimbilError, ValidationFailure
from .imageio import decode_png, encode_png, load_image
from .pipeline import PipelineConfig, execute, plan
from .scenegraph import (
    apply_edit,
    parse_edit_op,
    parse_scene_graph,
    serialize_edit_op,
    serialize_scene_graph,
)
from .synthetic import SPATIAL_PREDICATES

logger = logging.getLogger(__name__)

MAX_IMAGE_SIDE = 2048
PROGRESS_EVERY = 25  # inpaint iterations between progress writes


def _now() -> float:
    return time.time()


def _new_id(prefix: str) -> str:
    return f"{prefix}_{uuid.uuid4().hex[:12]}"


class Store:
    """Directory-backed session and job store."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)
        (self.root / "jobs").mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def session_lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    # -- sessions

    def session_dir(self, session_id: str) -> Path:
        return self.root / "sessions" / session_id

    def create_session(self, image: np.ndarray, graph_doc: dict) -> dict:
        graph = parse_scene_graph(graph_doc)
        session_id = _new_id("sess")
        d = self.session_dir(session_id)
        d.mkdir(parents=True)
        (d / "image.png").write_bytes(encode_png(image))
        (d / "base_image.png").write_bytes(encode_png(image))
        for name in ("graph_original.json", "graph_current.json",
                     "base_graph.json"):
            (d / name).write_text(json.dumps(serialize_scene_graph(graph),
                                             indent=2))
        meta = {"id": session_id, "image_ref": graph.image_ref,
                "created": _now(), "updated": _now()}
        (d / "session.json").write_text(json.dumps(meta, indent=2))
        (d / "history.json").write_text(json.dumps({"ops": []}, indent=2))
        (d / "pending.json").write_text(json.dumps({"ops": []}, indent=2))
        return meta

    def session_exists(self, session_id: str) -> bool:
        return (self.session_dir(session_id) / "session.json").exists()

    def _read_json(self, path: Path) -> dict:
        return json.loads(path.read_text())

    def session_state(self, session_id: str) -> dict:
        d = self.session_dir(session_id)
        meta = self._read_json(d / "session.json")
        current = self._read_json(d / "graph_current.json")
        pixel_graph = self._read_json(d / "base_graph.json")
        pending = self._read_json(d / "pending.json")["ops"]
        history = self._read_json(d / "history.json")["ops"]
        predicates = sorted({r["predicate"] for r in current["relationships"]}
                            | set(SPATIAL_PREDICATES))
        return {
            **meta,
            "graph": current,
            "pixel_graph": pixel_graph,
            "pending_ops": pending,
            "history_ops": history,
            "history_length": len(history),
            "predicates": predicates,
            "image_png_base64": base64.b64encode(
                (d / "base_image.png").read_bytes()).decode("ascii"),
        }

    def append_op(self, session_id: str, op_doc: dict) -> dict:
        d = self.session_dir(session_id)
        op = parse_edit_op(op_doc)
        current = parse_scene_graph(self._read_json(d / "graph_current.json"))
        updated = apply_edit(current, op)  # raises ValidationFailure when bad
        (d / "graph_current.json").write_text(
            json.dumps(serialize_scene_graph(updated), indent=2))
        for name in ("history.json", "pending.json"):
            doc = self._read_json(d / name)
            doc["ops"].append(serialize_edit_op(op))
            (d / name).write_text(json.dumps(doc, indent=2))
        meta = self._read_json(d / "session.json")
        meta["updated"] = _now()
        (d / "session.json").write_text(json.dumps(meta, indent=2))
        return serialize_scene_graph(updated)

    def take_pending_ops(self, session_id: str) -> list[dict]:
        d = self.session_dir(session_id)
        pending = self._read_json(d / "pending.json")["ops"]
        (d / "pending.json").write_text(json.dumps({"ops": []}, indent=2))
        return pending

    # -- jobs

    def job_dir(self, job_id: str) -> Path:
        return self.root / "jobs" / job_id

    def create_job(self, session_id: str, ops: list[dict],
                   config: dict) -> dict:
        job_id = _new_id("job")
        d = self.job_dir(job_id)
        d.mkdir(parents=True)
        record = {
            "id": job_id,
            "session_id": session_id,
            "ops": ops,
            "config": config,
            "status": "queued",
            "progress": {},
            "error": None,
            "created": _now(),
            "updated": _now(),
        }
        self.save_job(record)
        return record

    def save_job(self, record: dict) -> None:
        record["updated"] = _now()
        path = self.job_dir(record["id"]) / "job.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(record, indent=2))
        tmp.replace(path)

    def load_job(self, job_id: str) -> dict | None:
        path = self.job_dir(job_id) / "job.json"
        if not path.exists():
            return None
        return self._read_json(path)

    def list_jobs(self) -> list[str]:
        return sorted(p.name for p in (self.root / "jobs").iterdir()
                      if (p / "job.json").exists())


class JobRunner:
    """Bounded worker pool draining the job queue sequentially per worker."""

    def __init__(self, store: Store, workers: int = 1):
        self.store = store
        self.queue: queue.Queue[str] = queue.Queue()
        self.workers = max(1, workers)
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()

    def start(self) -> None:
        self.requeue_unfinished()
        for i in range(self.workers):
            t = threading.Thread(target=self._worker, name=f"job-worker-{i}",
                                 daemon=True)
            t.start()
            self._threads.append(t)

    def stop(self) -> None:
        self._stop.set()

    def requeue_unfinished(self) -> None:
        for job_id in self.store.list_jobs():
            record = self.store.load_job(job_id)
            if record and record["status"] in ("queued", "running"):
                record["status"] = "queued"
                self.store.save_job(record)
                self.queue.put(job_id)

    def submit(self, job_id: str) -> None:
        self.queue.put(job_id)

    def _worker(self) -> None:
        while not self._stop.is_set():
            try:
                job_id = self.queue.get(timeout=0.2)
            except queue.Empty:
                continue
            try:
                self.run_job(job_id)
            except Exception:
                logger.exception("job %s crashed outside the pipeline", job_id)
            finally:
                self.queue.task_done()

    def run_job(self, job_id: str) -> None:
        record = self.store.load_job(job_id)
        if record is None or record["status"] in ("done", "failed"):
            return
        record["status"] = "running"
        self.store.save_job(record)

        session_dir = self.store.session_dir(record["session_id"])
        last_write = {"iteration": -PROGRESS_EVERY}

        def progress(step_index: int, step_name: str, info: dict) -> None:
            iteration = info.get("iteration")
            if iteration is not None and \
                    iteration - last_write["iteration"] < PROGRESS_EVERY:
                return
            if iteration is not None:
                last_write["iteration"] = iteration
            else:
                last_write["iteration"] = -PROGRESS_EVERY
            record["progress"] = {
                "step_index": step_index,
                "step_name": step_name,
                "iteration": info.get("iteration"),
                "loss": info.get("loss"),
            }
            self.store.save_job(record)

        try:
            image = load_image(session_dir / "base_image.png")
            graph = parse_scene_graph(
                json.loads((session_dir / "base_graph.json").read_text()))
            ops = [parse_edit_op(doc) for doc in record["ops"]]
            config = PipelineConfig.from_dict(record["config"])
            job_plan = plan(graph, ops)
            result = execute(job_plan, image, graph, config,
                             self.store.job_dir(job_id), resume=True,
                             progress=progress)
        except PipelineError as exc:
            record["status"] = "failed"
            record["error"] = str(exc)
            self.store.save_job(record)
            return
        except Exception as exc:
            record["status"] = "failed"
            record["error"] = f"{type(exc).__name__}: {exc}"
            self.store.save_job(record)
            return

        with self.store.session_lock(record["session_id"]):
            (session_dir / "base_image.png").write_bytes(
                encode_png(result.image))
            (session_dir / "base_graph.json").write_text(json.dumps(
                serialize_scene_graph(result.graph_after), indent=2))
        record["status"] = "done"
        record["progress"] = {"step_index": len(job_plan.steps),
                              "step_name": "done", "iteration": None,
                              "loss": None}
        record["metrics"] = (result.metrics.to_dict()
                             if result.metrics is not None else None)
        record["artifacts"] = result.artifacts
        record["fallbacks"] = result.fallbacks
        self.store.save_job(record)


def create_app(data_dir: str | Path, workers: int = 1,
               start_runner: bool = True,
               frontend_dir: str | Path | None = None) -> FastAPI:
    store = Store(data_dir)
    runner = JobRunner(store, workers=workers)

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        if start_runner:
            runner.start()
        yield
        runner.stop()

    app = FastAPI(title="simbil", version=__version__, lifespan=lifespan)
    app.state.store = store
    app.state.runner = runner

    @app.exception_handler(ValidationFailure)
    def _validation_handler(request, exc: ValidationFailure):
        detail = {"error": str(exc)}
        if hasattr(exc, "path"):
            detail["path"] = exc.path
        return JSONResponse(status_code=422, content=detail)

    @app.exception_handler(SimbilError)
    def _simbil_handler(request, exc: SimbilError):
        return JSONResponse(status_code=500, content={"error": str(exc)})

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "name": "simbil", "version": __version__,
                "workers": runner.workers}

    @app.post("/sessions")
    async def create_session(image: UploadFile, graph: str = Form(...)) -> dict:
        data = await image.read()
        try:
            pixels = decode_png(data)
        except Exception as exc:
            raise HTTPException(status_code=422,
                                detail=f"not a decodable image: {exc}")
        h, w = pixels.shape[:2]
        if max(h, w) > MAX_IMAGE_SIDE:
            raise HTTPException(
                status_code=422,
                detail=f"image {w}x{h} exceeds the {MAX_IMAGE_SIDE}px cap")
        try:
            graph_doc = json.loads(graph)
        except json.JSONDecodeError as exc:
            raise HTTPException(status_code=422,
                                detail=f"graph is not valid JSON: {exc}")
        meta = store.create_session(pixels, graph_doc)
        return {"session_id": meta["id"]}

    def _require_session(session_id: str) -> None:
        if not store.session_exists(session_id):
            raise HTTPException(status_code=404,
                                detail=f"no session {session_id}")

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        _require_session(session_id)
        return store.session_state(session_id)

    @app.post("/sessions/{session_id}/ops")
    def post_op(session_id: str, op: dict) -> dict:
        _require_session(session_id)
        with store.session_lock(session_id):
            updated = store.append_op(session_id, op)
        return {"graph": updated}

    @app.post("/sessions/{session_id}/jobs")
    def post_job(session_id: str, spec: dict | None = None) -> dict:
        _require_session(session_id)
        with store.session_lock(session_id):
            pending = store.take_pending_ops(session_id)
            if not pending:
                raise HTTPException(status_code=409,
                                    detail="session has no pending ops")
            config = PipelineConfig.from_dict(spec or {})
            record = store.create_job(session_id, pending, config.to_dict())
        runner.submit(record["id"])
        return {"job_id": record["id"], "status": "queued"}

    def _require_job(job_id: str) -> dict:
        record = store.load_job(job_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"no job {job_id}")
        return record

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str) -> dict:
        record = _require_job(job_id)
        return {k: record.get(k) for k in
                ("id", "session_id", "status", "progress", "error",
                 "created", "updated")}

    @app.get("/jobs/{job_id}/result")
    def get_result(job_id: str) -> dict:
        record = _require_job(job_id)
        if record["status"] != "done":
            raise HTTPException(
                status_code=409,
                detail=f"job is {record['status']}, not done")
        result_path = store.job_dir(job_id) / "result.png"
        return {
            "job_id": job_id,
            "metrics": record.get("metrics"),
            "artifacts": record.get("artifacts", []),
            "fallbacks": record.get("fallbacks", []),
            "result_png_base64": base64.b64encode(
                result_path.read_bytes()).decode("ascii"),
        }

    @app.get("/jobs/{job_id}/steps/{step}")
    def get_step_artifact(job_id: str, step: int):
        _require_job(job_id)
        steps_dir = store.job_dir(job_id) / "steps"
        matches = sorted(steps_dir.glob(f"{step:02d}_*")) \
            if steps_dir.exists() else []
        if not matches:
            raise HTTPException(status_code=404,
                                detail=f"no artifacts for step {step}")
        output = matches[0] / "output.png"
        if not output.exists():
            raise HTTPException(status_code=404,
                                detail=f"step {step} has no output image")
        return FileResponse(output, media_type="image/png")

    if frontend_dir is not None and Path(frontend_dir).exists():
        app.mount("/ui", StaticFiles(directory=str(frontend_dir), html=True),
                  name="ui")

        @app.get("/")
        def index() -> Response:
            return Response(status_code=307, headers={"Location": "/ui/"})

    return app
