"""Local HTTP service over a compiled multiverse directory.

Read endpoints recompute from the artifacts on disk at request time, so a
refresh always reflects the latest run state. The only mutation the service
performs is replacing the template file, serialized behind a single writer
lock and guarded by a snapshot-version token so a stale editor cannot
silently clobber a newer save.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import HTMLResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from .aggregate import DEFAULT_THRESHOLD, aggregate_errors
from .exceptions import ConflictingEdit, IoError, MvdError
from .propagate import propagate, save_and_compile, save_template, universe_index_from_path
from .runner import load_run_manifest
from .template import load_manifest, load_summary, parse_template, render_universe

__all__ = ["ServiceConfig", "create_app", "serve", "template_version"]


@dataclass(frozen=True)
class ServiceConfig:
    multiverse_dir: Path
    port: int = 8765
    threshold: float = DEFAULT_THRESHOLD
    read_only: bool = False
    static_dir: Optional[Path] = None

    def __post_init__(self):
        if not 1024 <= self.port <= 65535:
            raise ValueError(f"port {self.port} outside [1024, 65535]")
        object.__setattr__(self, "multiverse_dir", Path(self.multiverse_dir))
        if self.static_dir is not None:
            object.__setattr__(self, "static_dir", Path(self.static_dir))


def template_version(text: str) -> str:
    """Snapshot token for one template state: hash of the exact text."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _error_json(exc: MvdError) -> dict:
    payload = {"type": exc.__class__.__name__, "message": str(exc)}
    line = getattr(exc, "line", None)
    if line is not None:
        payload["line"] = line
    path = getattr(exc, "path", None)
    if path is not None:
        payload["path"] = str(path)
    if isinstance(exc, ConflictingEdit):
        payload["conflicts"] = [list(c) for c in exc.conflicts]
    return {"error": payload}


def _default_static_dir() -> Optional[Path]:
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return candidate if candidate.is_dir() else None


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="mvd", docs_url=None, redoc_url=None)
    root = config.multiverse_dir
    write_lock = threading.Lock()

    def template_path() -> Optional[Path]:
        try:
            manifest = load_manifest(root)
        except IoError:
            return None
        return Path(manifest["template"])

    def current_template() -> tuple[Path, str]:
        path = template_path()
        if path is None or not path.is_file():
            raise IoError("no compiled multiverse with a reachable template", path=str(root))
        return path, path.read_text(encoding="utf-8")

    @app.get("/api/progress")
    def progress() -> JSONResponse:
        run = load_run_manifest(root)
        if run is not None:
            doc = {
                "executed": run.get("executed", 0),
                "total": run.get("total_universes", 0),
                "failed": run.get("failed", 0),
            }
            return JSONResponse(doc)
        total = 0
        try:
            total = load_manifest(root)["universes"]
        except IoError:
            try:
                total = len(load_summary(root / "summary.csv"))
            except IoError:
                total = 0
        return JSONResponse({"executed": 0, "total": total, "failed": 0})

    @app.get("/api/errors")
    def errors() -> JSONResponse:
        return JSONResponse(aggregate_errors(root, threshold=config.threshold))

    @app.get("/api/errors/{group_id}")
    def error_group(group_id: int) -> JSONResponse:
        report = aggregate_errors(root, threshold=config.threshold)
        for group in report["groups"]:
            if group["id"] == group_id:
                return JSONResponse(group)
        return JSONResponse(
            {"error": {"type": "UnknownGroup", "message": f"no error group {group_id}"}},
            status_code=404,
        )

    @app.get("/api/diff")
    def diff(universe: str) -> JSONResponse:
        candidates = [Path(universe), root / "universes" / Path(universe).name]
        edited_path = next((p for p in candidates if p.is_file()), None)
        if edited_path is None:
            return JSONResponse(
                {"error": {"type": "UnknownUniverse", "message": f"no such universe file: {universe}"}},
                status_code=404,
            )
        try:
            index = universe_index_from_path(edited_path)
            _, text = current_template()
            spec = parse_template(text, template_path())
            summary = load_summary(root / "summary.csv")
            if not 1 <= index <= len(summary):
                raise IoError(f"universe {index} outside the compiled set", path=str(edited_path))
            pristine = render_universe(spec, summary.assignment(index), index)
        except IoError as exc:
            return JSONResponse(_error_json(exc), status_code=404)
        except MvdError as exc:
            return JSONResponse(_error_json(exc), status_code=400)
        edited_text = edited_path.read_text(encoding="utf-8")
        try:
            session = propagate(spec, pristine, edited_text)
        except MvdError as exc:
            return JSONResponse(_error_json(exc), status_code=400)
        return JSONResponse(
            {
                "version": template_version(text),
                "old_universe": pristine.text,
                "new_universe": session.new_universe_text,
                "old_template": text,
                "new_template": session.suggested.text,
                "regions": [r.to_json_obj() for r in session.regions],
                "line_map": session.line_map.to_json_obj(),
                "provenance": list(session.suggested.provenance),
                "warnings": list(session.warnings),
            }
        )

    async def _template_post(request: Request, compile_after: bool) -> JSONResponse:
        if config.read_only:
            return JSONResponse(
                {"error": {"type": "ReadOnly", "message": "service is running read-only"}},
                status_code=403,
            )
        try:
            body = await request.json()
        except Exception:
            body = None
        if not isinstance(body, dict) or not isinstance(body.get("text"), str):
            return JSONResponse(
                {"error": {"type": "BadRequest", "message": "body must be JSON with a string 'text'"}},
                status_code=400,
            )
        text = body["text"]
        version = body.get("version")
        if not isinstance(version, str):
            return JSONResponse(
                {"error": {"type": "BadRequest", "message": "a 'version' snapshot token is required"}},
                status_code=400,
            )
        with write_lock:
            try:
                path, current = current_template()
            except IoError as exc:
                return JSONResponse(_error_json(exc), status_code=404)
            if version != template_version(current):
                return JSONResponse(
                    {
                        "error": {
                            "type": "StaleVersion",
                            "message": "template changed since this session's snapshot",
                        },
                        "current_version": template_version(current),
                    },
                    status_code=409,
                )
            try:
                if compile_after:
                    report = save_and_compile(text, path, root)
                else:
                    save_template(text, path)
                    report = None
            except IoError as exc:
                return JSONResponse(_error_json(exc), status_code=500)
            except MvdError as exc:
                return JSONResponse(_error_json(exc), status_code=400)
        doc = {"ok": True, "version": template_version(text)}
        if report is not None:
            doc["report"] = {
                "universes": report.universes,
                "decisions": report.decisions,
                "options": report.options,
            }
        return JSONResponse(doc)

    @app.post("/api/template")
    async def post_template(request: Request) -> JSONResponse:
        return await _template_post(request, compile_after=False)

    @app.post("/api/template/compile")
    async def post_template_compile(request: Request) -> JSONResponse:
        return await _template_post(request, compile_after=True)

    static = config.static_dir or _default_static_dir()
    if static is not None and static.is_dir():
        app.mount("/", StaticFiles(directory=static, html=True), name="ui")
    else:

        @app.get("/", response_class=HTMLResponse)
        def index() -> str:
            return (
                "<!doctype html><title>mvd</title><h1>mvd service</h1>"
                "<p>No UI build found. API lives under <code>/api/</code>:"
                " <code>/api/progress</code>, <code>/api/errors</code>,"
                " <code>/api/diff?universe=PATH</code>.</p>"
            )

    return app


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted."""
    import uvicorn

    uvicorn.run(
        create_app(config),
        host="127.0.0.1",
        port=config.port,
        log_level="warning",
    )
