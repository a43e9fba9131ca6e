"""HTTP/WebSocket service: live message stream plus replay queries.

Replay endpoints return the same envelope schema the live socket speaks,
so the browser client renders both modes from one message vocabulary.
"""

from __future__ import annotations

import asyncio
import time
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from ..diagnosis import DiagnosisPipeline
from ..errors import NotFound
from ..session import SessionConfig
from .formats import joint_frame_to_record, read_joint_stream
from .live import Broadcaster, LiveRunner, play_stream
from .storage import Storage


def _not_found(message: str) -> JSONResponse:
    return JSONResponse({"type": "error", "error": "not_found", "message": message},
                        status_code=404)


def create_app(
    storage: Storage,
    models: Optional[dict] = None,
    stream_path: Optional[str] = None,
    frame_rate: float = 30.0,
    max_speed: bool = False,
    ui_rate: float = 15.0,
    static_dir: Optional[str] = None,
) -> FastAPI:
    app = FastAPI(title="squatcoach")
    hub = Broadcaster("live")
    app.state.storage = storage
    app.state.hub = hub
    app.state.runner = None
    app.state.runner_task = None
    pipeline = DiagnosisPipeline(models) if models else None

    @app.get("/api/sessions")
    def list_sessions():
        return {"type": "session_list", "sessions": storage.list_sessions()}

    @app.get("/api/sessions/{session_id}")
    def session_detail(session_id: str):
        try:
            record = storage.load_session(session_id)
        except NotFound as err:
            return _not_found(str(err))
        reps = []
        for i, graded in enumerate(record["squats"]):
            from .formats import graded_to_dict
            doc = graded_to_dict(graded)
            reps.append({"type": "rep_completed", "session": session_id,
                         "rep_index": i + 1, **doc})
        return {"type": "session_detail", "session_id": session_id,
                "config": record["config"], "events": record["events"], "reps": reps}

    @app.get("/api/sessions/{session_id}/reps/{clip_id}")
    def rep_detail(session_id: str, clip_id: str):
        return clip_detail(clip_id)

    @app.get("/api/clips/{clip_id}")
    def clip_detail(clip_id: str):
        try:
            meta, clip, joints = storage.archive.load_clip(clip_id)
        except NotFound as err:
            return _not_found(str(err))
        features = {
            "t_ms": [f.timestamp_ms for f in clip.frames],
            "bt": [f.bt for f in clip.frames],
            "df": [f.df for f in clip.frames],
            "torso": [f.torso for f in clip.frames],
            "khr": [f.khr for f in clip.frames],
            "bs": [f.bs for f in clip.frames],
        }
        return {
            "type": "rep_detail",
            "session": meta.get("session_id", ""),
            "clip_id": clip_id,
            "rep_index": meta.get("rep_index", 0),
            "label": meta.get("label"),
            "graded": meta.get("graded"),
            "features": features,
            "joints": [joint_frame_to_record(j) for j in joints] if joints else None,
        }

    @app.post("/api/live/start")
    async def live_start():
        if app.state.runner_task is not None and not app.state.runner_task.done():
            return JSONResponse({"type": "error", "error": "already_running",
                                 "message": "a live session is active"}, status_code=409)
        if stream_path is None:
            return JSONResponse({"type": "error", "error": "no_source",
                                 "message": "serve was started without a frame source"},
                                status_code=409)
        frames, header = read_joint_stream(stream_path)
        fps = header.get("frame_rate", frame_rate)
        session_id = f"live-{int(time.time())}"
        runner = LiveRunner(
            play_stream(frames, fps, max_speed=max_speed), pipeline, storage,
            session_id=session_id, config=SessionConfig(frame_rate_hint=fps),
            ui_rate=ui_rate, frame_rate=fps, broadcaster=hub)
        app.state.runner = runner
        app.state.runner_task = asyncio.create_task(runner.run())
        return {"type": "live_started", "session": session_id, "frames": len(frames)}

    @app.get("/api/live/status")
    def live_status():
        running = app.state.runner_task is not None and not app.state.runner_task.done()
        return {"type": "live_status", "running": running,
                **app.state.hub.snapshot_state}

    @app.websocket("/ws/live")
    async def ws_live(ws: WebSocket):
        await ws.accept()
        chan = hub.subscribe()

        async def forward():
            while True:
                msg = await chan.pop()
                if msg is None:
                    break
                await ws.send_json(msg)

        task = asyncio.create_task(forward())
        try:
            while True:
                await ws.receive_text()  # inbound is ignored; keeps the socket alive
        except WebSocketDisconnect:
            pass
        finally:
            hub.unsubscribe(chan)
            task.cancel()

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
