"""HTTP+JSON API over the elicitation service.

Routes (all payloads carry ``api_version``):

* ``GET  /api/health``
* ``POST /api/sessions``                       {participant_id, interface}
* ``GET  /api/sessions/{sid}/next``
* ``POST /api/sessions/{sid}/responses``       {trial_index, ...interface payload}
* ``GET  /api/sessions/{sid}/export``
* ``GET  /api/stimuli/{stimulus_id}.png``
* ``GET  /api/classes``

If a built UI bundle directory is supplied it is served at the root.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from ..hmixdata import ConflictError
from .sessions import (
    API_VERSION,
    ElicitationService,
    PoolTooSmallError,
    ResponseError,
    SessionKind,
    SessionNotFoundError,
)


class CreateSessionRequest(BaseModel):
    participant_id: str = Field(min_length=1)
    interface: str
    api_version: int = API_VERSION


class SubmitRequest(BaseModel):
    trial_index: int
    api_version: int = API_VERSION
    # Interface-specific fields; the service validates the relevant subset.
    selection_index: int | None = None
    stimulus_id: str | None = None
    mix_slider: float | None = None
    confidence_slider: float | None = None
    top1_class: int | None = None
    top1_prob: int | None = None
    top2_class: int | None = None
    top2_prob: int | None = None
    ruled_out: list[int] | None = None
    response_ms: int | None = None


def create_app(service: ElicitationService, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="hmix elicitation service")

    def _check_version(version: int) -> None:
        if version != API_VERSION:
            raise HTTPException(
                status_code=400,
                detail=f"unsupported api_version {version}; this server speaks {API_VERSION}",
            )

    @app.get("/api/health")
    def health() -> dict[str, Any]:
        return {
            "status": "ok",
            "api_version": API_VERSION,
            "interfaces": list(SessionKind.ALL),
            "n_sessions": len(service._sessions),
        }

    @app.get("/api/classes")
    def classes() -> dict[str, Any]:
        return {"api_version": API_VERSION, "class_names": list(service.pool.class_names)}

    @app.post("/api/sessions")
    def create_session(req: CreateSessionRequest) -> dict[str, Any]:
        _check_version(req.api_version)
        try:
            plan = service.create_session(req.participant_id, req.interface)
        except PoolTooSmallError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return {
            "api_version": API_VERSION,
            "session_id": plan.session_id,
            "participant_id": plan.participant_id,
            "interface": plan.kind,
            "resolved_interface": plan.interface.value if plan.interface else None,
            "start_lambda": plan.start_lambda,
            "n_trials": plan.n_trials,
        }

    @app.get("/api/sessions/{session_id}/next")
    def next_trial(session_id: str) -> dict[str, Any]:
        try:
            return service.next_trial(session_id)
        except SessionNotFoundError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}") from None

    @app.post("/api/sessions/{session_id}/responses")
    def submit(session_id: str, req: SubmitRequest) -> dict[str, Any]:
        _check_version(req.api_version)
        payload = {
            k: v
            for k, v in req.model_dump().items()
            if v is not None and k not in ("trial_index", "api_version")
        }
        try:
            return service.submit_response(session_id, req.trial_index, payload)
        except SessionNotFoundError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}") from None
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        except ResponseError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None

    @app.get("/api/sessions/{session_id}/export")
    def export_session(session_id: str) -> dict[str, Any]:
        try:
            return service.export_session(session_id)
        except SessionNotFoundError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}") from None

    @app.get("/api/stimuli/{stimulus_id}.png")
    def stimulus_png(stimulus_id: str) -> Response:
        try:
            data = service.stimulus_png(stimulus_id)
        except (KeyError, ValueError):
            raise HTTPException(status_code=404, detail=f"unknown stimulus {stimulus_id}") from None
        return Response(content=data, media_type="image/png")

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:

        @app.get("/")
        def index() -> dict[str, Any]:
            return {
                "service": "hmix elicitation service",
                "api_version": API_VERSION,
                "note": "UI bundle not built; API endpoints live under /api/",
            }

    return app
