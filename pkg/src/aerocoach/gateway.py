"""Gateway service: the transport between the engine and a browser UI.

HTTP endpoints control the session (start/stop/configure), a control
endpoint ingests human stick input at up to 20 Hz, and a websocket stream
pushes one payload per tick (state, deviations, commands with their
envelope samples, voice events, verdicts). The session itself runs in a
dedicated thread at a configurable time scale; readers only ever see
immutable per-tick snapshots.
"""

from __future__ import annotations

import asyncio
import dataclasses
import threading
import time
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .flight_state import ControlInput
from .session_engine import Session, SessionConfig, write_log
from .eval_harness import compute_training_metrics
from .task_standards import load_task_spec

MAX_TIME_SCALE = 50.0


class StartRequest(BaseModel):
    task_id: str
    condition: str = "normal"
    variant: int = 0
    assist: bool = True
    backend: str = "oracle"
    seed: int = 0
    pilot: str = "human"  # "human" (controls endpoint) | "trainee" (synthetic demo)
    skill: str = "default"
    time_scale: float = Field(default=1.0, gt=0.0, le=MAX_TIME_SCALE)
    duration_s: int | None = None
    log_path: str | None = None


class ControlsIn(BaseModel):
    stick_x: float = Field(default=0.0, ge=-1.0, le=1.0)
    stick_y: float = Field(default=0.0, ge=-1.0, le=1.0)
    throttle: float = Field(default=0.0, ge=0.0, le=1.0)


class _Controls:
    """Latest-wins shared control input from the /api/controls endpoint."""

    def __init__(self):
        self._lock = threading.Lock()
        self._value = ControlInput()

    def set(self, value: ControlInput) -> None:
        with self._lock:
            self._value = value

    def get(self) -> ControlInput:
        with self._lock:
            return self._value


class _Hub:
    """Broadcasts session-thread payloads to websocket subscribers."""

    def __init__(self):
        self._loop: asyncio.AbstractEventLoop | None = None
        self._queues: set[asyncio.Queue] = set()
        self._lock = threading.Lock()

    def attach_loop(self, loop: asyncio.AbstractEventLoop) -> None:
        self._loop = loop

    def subscribe(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue(maxsize=256)
        with self._lock:
            self._queues.add(q)
        return q

    def unsubscribe(self, q: asyncio.Queue) -> None:
        with self._lock:
            self._queues.discard(q)

    def publish(self, payload: dict) -> None:
        loop = self._loop
        if loop is None:
            return
        with self._lock:
            queues = list(self._queues)

        def _push():
            for q in queues:
                if q.full():
                    try:
                        q.get_nowait()  # drop the oldest; stream is latest-wins
                    except asyncio.QueueEmpty:
                        pass
                q.put_nowait(payload)

        loop.call_soon_threadsafe(_push)


def _command_payload(command) -> dict:
    env = command.envelope
    return {
        "channel": command.channel,
        "mode": env.mode,
        "peak_fraction": command.peak_fraction,
        "duration_ms": env.duration_ms,
        "purpose": command.purpose,
        "sample_rate_hz": env.sample_rate_hz,
        "envelope": [round(s, 4) for s in env.samples],
    }


def _tick_payload(record, commands) -> dict:
    return {
        "type": "tick",
        "tick": record.tick,
        "state": {"t": record.state.t, **record.state.as_metrics()},
        "phase": record.phase,
        "phase_transition": record.phase_transition,
        "transition": record.transition,
        "deviations": [
            {
                "metric": d.metric,
                "value": d.value,
                "target": d.target,
                "tolerance": d.tolerance,
                "deviation": d.deviation,
                "in_band": d.in_band,
            }
            for d in record.report.deviations
        ],
        "worst": record.report.worst,
        "all_in_band": record.report.all_in_band,
        "guidance": record.guidance_text,
        "packet": record.packet,
        "commands": [_command_payload(c) for c in commands],
        "voice": [v.to_json() for v in record.voice],
        "controls": (
            {
                "stick_x": record.control.stick_x,
                "stick_y": record.control.stick_y,
                "throttle": record.control.throttle,
            }
            if record.control
            else None
        ),
        "verdict": record.verdict.to_json(),
        "flags": record.flags,
    }


class GatewayRuntime:
    def __init__(self, config: dict | None = None):
        self.config = config or {}
        self.hub = _Hub()
        self.controls = _Controls()
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()
        self._lock = threading.Lock()
        self.running = False
        self.current: dict | None = None
        self.tick = 0
        self.last_log_path: str | None = None
        self.last_metrics: dict | None = None

    # session lifecycle ------------------------------------------------------

    def start(self, req: StartRequest) -> dict:
        from .cli import _skill

        with self._lock:
            if self.running:
                raise RuntimeError("a session is already running")
            self._stop.clear()
            self.running = True
            self.tick = 0
        log_path = req.log_path or f"gateway_{req.task_id}_{req.seed}_{int(time.time())}.jsonl"
        session_config = SessionConfig(
            task_id=req.task_id,
            condition=req.condition,
            variant=req.variant,
            backend=req.backend,
            backend_config=self.config.get("backend", {}),
            assist=req.assist,
            seed=req.seed,
            skill=_skill(req.skill),
            log_path=None,  # the gateway writes the log itself after the loop
        )
        self.current = {**req.model_dump(), "log_path": log_path}
        self._thread = threading.Thread(
            target=self._run, args=(session_config, req, log_path), daemon=True
        )
        self._thread.start()
        return self.current

    def stop(self) -> None:
        self._stop.set()
        thread = self._thread
        if thread is not None:
            thread.join(timeout=10.0)

    def _run(self, session_config: SessionConfig, req: StartRequest, log_path: str) -> None:
        try:
            control_source = self.controls.get if req.pilot == "human" else None
            session = Session(session_config, control_source=control_source)
            scenario = session.scenario
            if req.duration_s is not None:
                scenario = dataclasses.replace(scenario, duration_s=req.duration_s)
                session.scenario = scenario
                session.sim.scenario = scenario
            interval = 1.0 / req.time_scale
            nudges = ()
            next_deadline = time.monotonic()
            for _ in range(scenario.duration_s):
                if self._stop.is_set():
                    break
                telemetry, control, sim_flags = session.sim.tick(
                    session.tracker.targets(), nudges
                )
                record, commands = session.process_tick(telemetry, control, sim_flags)
                if req.pilot == "trainee" and session_config.assist:
                    nudges = session.nudge_windows(commands)
                self.tick = record.tick
                self.hub.publish(_tick_payload(record, commands))
                next_deadline += interval
                delay = next_deadline - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                if session.sim.touched_down:
                    break
            write_log(log_path, session.header(), session.records)
            self.last_log_path = log_path
            spec = load_task_spec(session_config.task_id, reference=session.reference)
            metrics = compute_training_metrics(
                [r.state for r in session.records], spec,
                history_window=session_config.history_window,
            )
            self.last_metrics = metrics.to_json()
            self.hub.publish({
                "type": "end",
                "ticks": len(session.records),
                "log_path": log_path,
                "metrics": self.last_metrics,
            })
        except Exception as exc:  # surfaced to clients, never crashes the server
            self.hub.publish({"type": "error", "detail": f"{type(exc).__name__}: {exc}"})
        finally:
            with self._lock:
                self.running = False

    def status(self) -> dict:
        return {
            "running": self.running,
            "tick": self.tick,
            "session": self.current,
            "last_log_path": self.last_log_path,
        }


def create_app(config: dict | None = None, static_dir: str | Path | None = None) -> FastAPI:
    runtime = GatewayRuntime(config)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        runtime.hub.attach_loop(asyncio.get_running_loop())
        yield
        runtime.stop()

    app = FastAPI(title="aerocoach gateway", lifespan=lifespan)
    app.state.runtime = runtime

    @app.get("/api/health")
    def health():
        return {"ok": True}

    @app.get("/api/session")
    def session_status():
        return runtime.status()

    @app.post("/api/session/start")
    def session_start(req: StartRequest):
        try:
            return runtime.start(req)
        except RuntimeError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except Exception as exc:
            raise HTTPException(status_code=400, detail=f"{type(exc).__name__}: {exc}")

    @app.post("/api/session/stop")
    def session_stop():
        runtime.stop()
        return {"stopped": True}

    @app.post("/api/controls")
    def controls(inp: ControlsIn):
        runtime.controls.set(ControlInput(inp.stick_x, inp.stick_y, inp.throttle))
        applied = runtime.controls.get()
        return {
            "ok": True,
            "applied": {
                "stick_x": applied.stick_x,
                "stick_y": applied.stick_y,
                "throttle": applied.throttle,
            },
        }

    @app.get("/api/report")
    def report():
        if runtime.last_metrics is None:
            raise HTTPException(status_code=404, detail="no finished session yet")
        return {"metrics": runtime.last_metrics, "log_path": runtime.last_log_path}

    @app.websocket("/ws/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        q = runtime.hub.subscribe()
        try:
            await ws.send_json({"type": "hello", **runtime.status()})
            while True:
                payload = await q.get()
                await ws.send_json(payload)
                if payload.get("type") == "end":
                    # keep streaming; a new session may start on the same socket
                    continue
        except WebSocketDisconnect:
            pass
        finally:
            runtime.hub.unsubscribe(q)

    static_path = Path(static_dir) if static_dir else None
    if static_path and static_path.is_dir():
        app.mount("/", StaticFiles(directory=str(static_path), html=True), name="ui")
    else:
        @app.get("/", response_class=HTMLResponse)
        def index():
            return (
                "<html><body><h3>aerocoach gateway</h3>"
                "<p>No UI bundle is mounted. Build the frontend and pass "
                "<code>--static</code> to <code>aerocoach serve</code>.</p>"
                "</body></html>"
            )

    return app
