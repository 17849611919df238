"""Websocket teleop service and static UI hosting.

One asyncio task owns the tick loop; websocket handlers never touch engine
state directly, they enqueue mutations that the loop drains at tick
boundaries.  The first connected client gets the steering role, later ones
are read-only observers (their mutation attempts are answered with an
error); the role passes to the earliest remaining connection on disconnect.

Snapshots are broadcast to every client once per camera-frame tick, and
keep flowing at the frame cadence (with frozen sim time) while paused.
"""

from __future__ import annotations

import asyncio
import json
import logging
import os
import tempfile
from contextlib import asynccontextmanager
from typing import Optional

import uvicorn
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse
from fastapi.staticfiles import StaticFiles

from .gateway import SessionConfig, SessionEngine
from .scenario import Scenario

log = logging.getLogger("graspsim.server")

# Messages that mutate the session; observers may not send these.
_MUTATING = {
    "set_velocity",
    "set_tilt",
    "spawn_object",
    "remove_object",
    "reset",
    "pause",
    "resume",
    "step",
    "set_param",
}

_PLACEHOLDER_PAGE = """<!doctype html>
<html><head><title>graspsim</title></head>
<body style="font-family: sans-serif">
<h3>graspsim gateway</h3>
<p>No UI bundle found. Build the frontend (<code>npm run build</code> in
<code>frontend/</code>) and restart with <code>--ui-dir frontend/dist</code>,
or connect directly to the websocket endpoint at <code>/ws</code>.</p>
</body></html>
"""


class SessionHub:
    """Connection registry plus the engine-stepping loop."""

    def __init__(self, engine: SessionEngine) -> None:
        self.engine = engine
        self.clients: list[WebSocket] = []
        self._lock = asyncio.Lock()

    @property
    def controller_ws(self) -> Optional[WebSocket]:
        return self.clients[0] if self.clients else None

    async def register(self, ws: WebSocket) -> None:
        async with self._lock:
            self.clients.append(ws)

    async def unregister(self, ws: WebSocket) -> None:
        async with self._lock:
            if ws in self.clients:
                self.clients.remove(ws)

    async def broadcast(self, message: dict) -> None:
        text = json.dumps(message)
        stale: list[WebSocket] = []
        for ws in list(self.clients):
            try:
                await ws.send_text(text)
            except Exception:
                stale.append(ws)
        for ws in stale:
            await self.unregister(ws)

    async def wait_steps_drained(self) -> None:
        """Block until queued step ticks have run (or the session ended).

        step acks are deferred until the burst completes so a scripted
        client can drive the session fully deterministically."""
        while self.engine.pending_steps > 0 and not self.engine.ended:
            await asyncio.sleep(0.001)

    async def run_loop(self) -> None:
        """Pace the engine against the wall clock; snapshot every frame tick.

        While paused, queued step{n} requests advance sim time; otherwise
        snapshots keep flowing at the camera frame cadence with frozen time.
        """
        engine = self.engine
        frame_period_s = engine.cfg.camera.frame_period_ms / 1000.0
        step_s = engine.cfg.base_step_ms / 1000.0
        loop = asyncio.get_running_loop()
        next_wall = loop.time()
        last_idle_snapshot = loop.time()
        while True:
            if not engine.ended and (not engine.paused or engine.pending_steps > 0):
                stepping = engine.paused and engine.pending_steps > 0
                if stepping:
                    engine.pending_steps -= 1
                frame_fired = engine.tick_once()
                if frame_fired:
                    await self.broadcast(engine.snapshot())
                    last_idle_snapshot = loop.time()
                if stepping and engine.pending_steps > 0:
                    # Burst through queued steps without wall-clock pacing.
                    await asyncio.sleep(0)
                    continue
                next_wall = max(next_wall + step_s, loop.time() - 0.25)
                delay = next_wall - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                else:
                    await asyncio.sleep(0)
            else:
                # Paused or ended: keep snapshots flowing at frame cadence.
                now = loop.time()
                if now - last_idle_snapshot >= frame_period_s:
                    await self.broadcast(engine.snapshot())
                    last_idle_snapshot = now
                await asyncio.sleep(min(frame_period_s / 4.0, 0.05))
                next_wall = loop.time()


def create_app(engine: SessionEngine, ui_dir: Optional[str] = None) -> FastAPI:
    hub = SessionHub(engine)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        task = asyncio.create_task(hub.run_loop())
        yield
        task.cancel()
        engine.finish()

    app = FastAPI(title="graspsim gateway", lifespan=lifespan)
    app.state.hub = hub

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket) -> None:
        await ws.accept()
        await hub.register(ws)
        # Greet every connection with a full snapshot so rendering can start
        # before the next frame tick.
        await ws.send_text(json.dumps(engine.snapshot()))
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError as exc:
                    await ws.send_text(
                        json.dumps(
                            {"type": "error", "ref": None, "reason": f"not JSON: {exc}"}
                        )
                    )
                    continue
                if (
                    isinstance(msg, dict)
                    and msg.get("type") in _MUTATING
                    and ws is not hub.controller_ws
                ):
                    response = {
                        "type": "error",
                        "ref": msg.get("ref"),
                        "reason": "read-only observer: another client holds the steering role",
                    }
                else:
                    response = engine.handle_client_msg(msg)
                    if (
                        response.get("type") == "ack"
                        and isinstance(msg, dict)
                        and msg.get("type") == "step"
                    ):
                        await hub.wait_steps_drained()
                await ws.send_text(json.dumps(response))
        except WebSocketDisconnect:
            pass
        finally:
            await hub.unregister(ws)

    if ui_dir is not None and os.path.isdir(ui_dir):
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    else:

        @app.get("/")
        async def index() -> HTMLResponse:
            return HTMLResponse(_PLACEHOLDER_PAGE)

    return app


def default_ui_dir() -> Optional[str]:
    """Look for a built frontend bundle near the working directory."""
    here = os.path.dirname(os.path.abspath(__file__))
    candidates = [
        os.path.join(os.getcwd(), "frontend", "dist"),
        os.path.normpath(os.path.join(here, "..", "..", "frontend", "dist")),
    ]
    for path in candidates:
        if os.path.isdir(path):
            return path
    return None


def serve(
    cfg: SessionConfig,
    scenario: Scenario,
    port: int,
    ui_dir: Optional[str] = None,
    host: str = "127.0.0.1",
    start_paused: bool = False,
) -> None:
    """Run the gateway until interrupted (blocking)."""
    trace_path = cfg.trace_path
    if trace_path is None:
        fd, trace_path = tempfile.mkstemp(prefix="graspsim-", suffix=".trace")
        os.close(fd)
    log.info("trace: %s", trace_path)
    trace_fh = open(trace_path, "w", encoding="utf-8")
    try:
        engine = SessionEngine(cfg, scenario, steering_source="live", trace_fh=trace_fh)
        engine.paused = start_paused
        app = create_app(engine, ui_dir=ui_dir or default_ui_dir())
        print(f"graspsim serving on ws://{host}:{port}/ws (trace: {trace_path})", flush=True)
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        trace_fh.close()
