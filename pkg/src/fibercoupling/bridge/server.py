"""FastAPI app: WebSocket protocol on /ws, static human-play UI on /."""

from __future__ import annotations

import asyncio
import json
import logging
import os

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from ..config import RunConfig, run_config_to_dict
from .protocol import ErrorMessage
from .session import Session, summarize_baseline_csv

logger = logging.getLogger(__name__)

DEFAULT_UI_DIR = os.path.join(os.path.dirname(__file__), "..", "..", "..",
                              "frontend", "dist")


def create_app(config: RunConfig | None = None, seed: int = 0,
               baseline_csv: str | None = "baseline.csv",
               ui_dir: str | None = None) -> FastAPI:
    config = config or RunConfig()
    app = FastAPI(title="fibercoupling bridge")
    session = Session(config, seed=seed, baseline_csv=baseline_csv)
    app.state.session = session
    lock = asyncio.Lock()
    controller: dict = {"ws": None}
    observers: list[WebSocket] = []

    @app.get("/api/info")
    async def info():
        return {
            "goal_power": session.env.p_goal,
            "a_max": session.env.config.a_max,
            "noise_factor": session.env.noise.noise_factor,
            "attempts": len(session.attempts),
            "config": run_config_to_dict(config),
        }

    @app.get("/api/baseline/summary")
    async def baseline_summary(mode: str | None = None):
        if not baseline_csv or not os.path.exists(baseline_csv):
            return JSONResponse({"error": "no baseline recorded yet"}, status_code=404)
        try:
            return summarize_baseline_csv(baseline_csv, mode=mode)
        except ValueError as err:
            return JSONResponse({"error": str(err)}, status_code=404)

    async def broadcast(replies: list[dict]) -> None:
        dead = []
        for ws in observers:
            try:
                for reply in replies:
                    await ws.send_text(json.dumps(reply))
            except Exception:
                dead.append(ws)
        for ws in dead:
            observers.remove(ws)

    @app.websocket("/ws")
    async def websocket_endpoint(ws: WebSocket):
        await ws.accept()
        if controller["ws"] is None:
            role = "controller"
            controller["ws"] = ws
        else:
            role = "observer"
            observers.append(ws)
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    message = json.loads(raw)
                except json.JSONDecodeError:
                    await ws.send_text(json.dumps(ErrorMessage(
                        code="bad_json", detail="message is not valid JSON").model_dump()))
                    continue
                # One env step at a time, never interleaved across clients.
                async with lock:
                    replies = session.handle_message(message, role=role)
                for reply in replies:
                    await ws.send_text(json.dumps(reply))
                if role == "controller":
                    await broadcast([r for r in replies if r.get("type") == "state"])
        except WebSocketDisconnect:
            pass
        finally:
            if controller["ws"] is ws:
                controller["ws"] = None
            elif ws in observers:
                observers.remove(ws)

    serve_dir = ui_dir if ui_dir is not None else os.path.normpath(DEFAULT_UI_DIR)
    if os.path.isdir(serve_dir):
        app.mount("/", StaticFiles(directory=serve_dir, html=True), name="ui")
    else:
        @app.get("/")
        async def index():
            return {"detail": "UI bundle not built; see frontend/README for build steps",
                    "websocket": "/ws"}

    return app
