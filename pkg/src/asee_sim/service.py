"""HTTP/WebSocket service around the simulator.

Batch endpoints (POST /run, /calibrate, /metrics) are stateless. A live
teleop session — one simulation stepped at a fixed wall-clock rate with
state fanned out to every connected WebSocket client — exists only when
the app is created with a scenario (or a replay log).

Concurrency model: a single asyncio task owns all mutable simulation
state. Inbound messages land on a queue that the loop drains once per
step; the newest velocity command wins and a command older than
COMMAND_STALE_S is treated as zero. State snapshots are immutable JSON
strings pushed to per-client queues, so every client sees an identical
stream. A malformed or unknown message is logged and ignored; a client
disconnect never stops the loop.
"""

from __future__ import annotations

import asyncio
import dataclasses
import json
import logging
import math
import os
from contextlib import asynccontextmanager, suppress
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .calibration import DegenerateMotionError, parse_pose_pairs, solve_ax_xb
from .geometry import cloud_to_ply
from .metrics import TimeSeries, force_error_stats, response_time
from .runtime import LogRecord, Simulation, logs_to_csv, parse_logs_csv
from .scenario import SIM_RATE_HZ, ScenarioConfig

log = logging.getLogger("asee_sim.service")

COMMAND_STALE_S = 1.0
MAX_BURST_STEPS = 4
CLIENT_QUEUE_SIZE = 64

ACTION_NAMES = ("land", "retract", "pause", "resume")
TUNE_TARGETS = ("orientation", "force")


# ---------------------------------------------------------------------------
# request/response models

class RunRequest(BaseModel):
    scenario: dict
    base_dir: str | None = None
    include_cloud: bool = False


class RunResponse(BaseModel):
    records: int
    duration_s: float
    final_stage: str
    final_force_n: float
    csv: str
    cloud_ply: str | None = None


class CalibrateRequest(BaseModel):
    pairs_text: str


class CalibrateResponse(BaseModel):
    pairs: int
    translation_m: list[float]
    quaternion_wxyz: list[float]
    rotation_residual_rad: float
    translation_residual_m: float


class MetricsRequest(BaseModel):
    log_csv: str
    response_threshold_deg: float = 5.0
    f_desired: float = 3.5


class MetricsResponse(BaseModel):
    records: int
    mean_err_deg: float | None
    max_err_deg: float | None
    response_times_s: list[float]
    force_mean_err_n: float | None
    force_mean_abs_err_n: float | None
    force_within_half_n_fraction: float | None


class HealthResponse(BaseModel):
    status: str
    mode: str


# ---------------------------------------------------------------------------
# state serialization

def _finite(x: float) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None


def state_message(rec: LogRecord) -> dict:
    normal = [float(v) for v in rec.normal]
    return {
        "type": "state",
        "t": round(float(rec.t), 9),
        "q": [float(v) for v in rec.q],
        "pos": [float(v) for v in rec.pos],
        "quat": [float(v) for v in rec.quat],
        "normal": None if any(not math.isfinite(v) for v in normal) else normal,
        "force_n": float(rec.force_n),
        "err_deg": _finite(rec.err_deg),
        "stage": rec.stage,
    }


# ---------------------------------------------------------------------------
# live session

class TeleopSession:
    """Owns one simulation (or replay log) plus the fan-out to clients."""

    def __init__(self, scenario: ScenarioConfig | None = None,
                 replay: list[LogRecord] | None = None,
                 rate_hz: float = SIM_RATE_HZ):
        if (scenario is None) == (replay is None):
            raise ValueError("need exactly one of scenario or replay")
        self.scenario = scenario
        self.sim = Simulation(scenario) if scenario is not None else None
        self.replay = replay
        self.replay_index = 0
        self.period = 1.0 / rate_hz
        self.paused = False
        self.inbound: list[dict] = []
        self.command = (0.0, 0.0, 0.0)
        self.command_time = -math.inf
        self.clients: list[asyncio.Queue] = []
        self.closed = False

    @property
    def mode(self) -> str:
        return "replay" if self.replay is not None else "live"

    # -- client fan-out ------------------------------------------------------

    def attach(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue(maxsize=CLIENT_QUEUE_SIZE)
        self.clients.append(q)
        return q

    def detach(self, q: asyncio.Queue) -> None:
        with suppress(ValueError):
            self.clients.remove(q)

    def _broadcast(self, text: str) -> None:
        for q in list(self.clients):
            try:
                q.put_nowait(text)
            except asyncio.QueueFull:
                # evict the stalled consumer rather than slow everyone down
                log.warning("dropping client that stopped reading state")
                self.detach(q)
                with suppress(asyncio.QueueEmpty):
                    q.get_nowait()
                with suppress(asyncio.QueueFull):
                    q.put_nowait(None)  # close sentinel for the writer task

    # -- inbound messages ----------------------------------------------------

    def handle_text(self, text: str) -> None:
        try:
            msg = json.loads(text)
        except (ValueError, TypeError):
            log.warning("ignoring malformed message: %.80s", text)
            return
        if not isinstance(msg, dict):
            log.warning("ignoring non-object message: %.80s", text)
            return
        kind = msg.get("type")
        if kind == "cmd":
            try:
                cmd = (float(msg.get("vx", 0.0)), float(msg.get("vy", 0.0)),
                       float(msg.get("wz", 0.0)))
            except (TypeError, ValueError):
                log.warning("ignoring cmd with non-numeric fields: %.80s", text)
                return
            if not all(math.isfinite(v) for v in cmd):
                log.warning("ignoring cmd with non-finite fields: %.80s", text)
                return
            self.inbound.append({"type": "cmd", "cmd": cmd})
        elif kind == "action":
            name = msg.get("name")
            if name not in ACTION_NAMES:
                log.warning("ignoring unknown action: %r", name)
                return
            self.inbound.append({"type": "action", "name": name})
        elif kind == "tune":
            self.inbound.append({"type": "tune", "key": msg.get("key"),
                                 "value": msg.get("value")})
        else:
            log.warning("ignoring message of unknown type: %r", kind)

    def _apply_tune(self, key, value) -> None:
        sim = self.sim
        if sim is None:
            return
        if not isinstance(key, str) or "." not in key:
            log.warning("ignoring tune with bad key: %r", key)
            return
        target, _, field = key.partition(".")
        if target not in TUNE_TARGETS:
            log.warning("ignoring tune for unknown target: %r", key)
            return
        attr = "orientation_cfg" if target == "orientation" else "force_cfg"
        cfg = getattr(sim, attr)
        if field not in {f.name for f in dataclasses.fields(cfg)}:
            log.warning("ignoring tune for unknown field: %r", key)
            return
        try:
            setattr(sim, attr, dataclasses.replace(cfg, **{field: float(value)}))
        except (TypeError, ValueError) as exc:
            log.warning("ignoring tune %r: %s", key, exc)

    def _drain_inbound(self, now: float) -> None:
        pending, self.inbound = self.inbound, []
        for entry in pending:
            if entry["type"] == "cmd":
                self.command = entry["cmd"]
                self.command_time = now
            elif entry["type"] == "action":
                name = entry["name"]
                if name == "pause":
                    self.paused = True
                elif name == "resume":
                    self.paused = False
                elif name == "land" and self.sim is not None:
                    self.sim.request_land()
                elif name == "retract" and self.sim is not None:
                    self.sim.request_retract()
            elif entry["type"] == "tune":
                self._apply_tune(entry["key"], entry["value"])

    # -- stepping ------------------------------------------------------------

    def step_once(self, now: float) -> None:
        self._drain_inbound(now)
        if self.paused:
            return
        if self.sim is not None:
            teleop = self.command
            if now - self.command_time > COMMAND_STALE_S:
                teleop = (0.0, 0.0, 0.0)
            rec = self.sim.step(teleop)
            self._broadcast(json.dumps(state_message(rec)))
        elif self.replay_index < len(self.replay):
            rec = self.replay[self.replay_index]
            self.replay_index += 1
            self._broadcast(json.dumps(state_message(rec)))

    async def run(self) -> None:
        loop = asyncio.get_running_loop()
        next_t = loop.time() + self.period
        while not self.closed:
            now = loop.time()
            if next_t > now:
                await asyncio.sleep(next_t - now)
                now = loop.time()
            behind = 1 + int(max(0.0, now - next_t) / self.period)
            for _ in range(min(behind, MAX_BURST_STEPS)):
                self.step_once(now)
            if behind > MAX_BURST_STEPS:
                next_t = now + self.period  # shed lag we cannot recover
            else:
                next_t += behind * self.period
            await asyncio.sleep(0)  # let reader/writer tasks run every cycle


# ---------------------------------------------------------------------------
# app factory

def create_app(scenario: ScenarioConfig | None = None,
               replay: list[LogRecord] | None = None,
               frontend_dir: str | None = None,
               rate_hz: float = SIM_RATE_HZ) -> FastAPI:
    session = None
    if scenario is not None or replay is not None:
        session = TeleopSession(scenario=scenario, replay=replay, rate_hz=rate_hz)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        task = asyncio.create_task(session.run()) if session is not None else None
        yield
        if task is not None:
            session.closed = True
            task.cancel()
            with suppress(asyncio.CancelledError):
                await task

    app = FastAPI(title="asee-sim", lifespan=lifespan)
    app.state.session = session

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        mode = session.mode if session is not None else "api"
        return HealthResponse(status="ok", mode=mode)

    @app.post("/run", response_model=RunResponse)
    def run(req: RunRequest) -> RunResponse:
        try:
            cfg = ScenarioConfig.from_dict(req.scenario)
        except (ValueError, TypeError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if req.base_dir is not None:
            cfg._base_dir = req.base_dir
        sim = Simulation(cfg)
        records = sim.run()
        ply = None
        if req.include_cloud and sim.last_cloud_world is not None:
            ply = cloud_to_ply(sim.last_cloud_world)
        last = records[-1]
        return RunResponse(records=len(records), duration_s=float(last.t),
                           final_stage=last.stage,
                           final_force_n=float(last.force_n),
                           csv=logs_to_csv(records), cloud_ply=ply)

    @app.post("/calibrate", response_model=CalibrateResponse)
    def calibrate(req: CalibrateRequest) -> CalibrateResponse:
        try:
            pairs = parse_pose_pairs(req.pairs_text)
            result = solve_ax_xb(pairs)
        except (ValueError, DegenerateMotionError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return CalibrateResponse(
            pairs=len(pairs),
            translation_m=[float(v) for v in result.X.t],
            quaternion_wxyz=[float(v) for v in result.X.q],
            rotation_residual_rad=float(result.rotation_residual),
            translation_residual_m=float(result.translation_residual))

    @app.post("/metrics", response_model=MetricsResponse)
    def metrics(req: MetricsRequest) -> MetricsResponse:
        try:
            records = parse_logs_csv(req.log_csv)
        except (ValueError, IndexError) as exc:
            raise HTTPException(status_code=422, detail=f"unparseable log: {exc}")
        if not records:
            raise HTTPException(status_code=422, detail="log holds no records")
        t = np.array([r.t for r in records])
        err = np.array([r.err_deg for r in records])
        force = np.array([r.force_n for r in records])
        ok = np.isfinite(err)
        mean_err = float(np.mean(err[ok])) if ok.any() else None
        max_err = float(np.max(err[ok])) if ok.any() else None
        responses = []
        if ok.any():
            series = TimeSeries(t=t[ok], values=err[ok])
            responses = response_time(series, req.response_threshold_deg)
        scanning = np.array([r.stage == "scanning" for r in records])
        f_mean = f_mean_abs = f_frac = None
        if scanning.any():
            fs = TimeSeries(t=t[scanning], values=force[scanning])
            mean, _, frac = force_error_stats(fs, req.f_desired)
            f_mean, f_frac = float(mean), float(frac)
            f_mean_abs = float(np.mean(np.abs(force[scanning] - req.f_desired)))
        return MetricsResponse(records=len(records), mean_err_deg=mean_err,
                               max_err_deg=max_err,
                               response_times_s=[float(v) for v in responses],
                               force_mean_err_n=f_mean,
                               force_mean_abs_err_n=f_mean_abs,
                               force_within_half_n_fraction=f_frac)

    @app.websocket("/ws/teleop")
    async def teleop(ws: WebSocket) -> None:
        await ws.accept()
        if session is None:
            await ws.close(code=1008, reason="no live scenario")
            return
        outbound = session.attach()

        async def writer():
            while True:
                text = await outbound.get()
                if text is None:
                    await ws.close(code=1013, reason="client too slow")
                    return
                await ws.send_text(text)

        writer_task = asyncio.create_task(writer())
        try:
            while True:
                session.handle_text(await ws.receive_text())
        except WebSocketDisconnect:
            pass
        except RuntimeError:
            pass  # receive after close; shutting down anyway
        finally:
            writer_task.cancel()
            with suppress(asyncio.CancelledError):
                await writer_task
            session.detach(outbound)

    if frontend_dir is None:
        frontend_dir = os.environ.get("ASEE_SIM_FRONTEND")
    if frontend_dir is None and Path("frontend/dist/index.html").exists():
        frontend_dir = "frontend/dist"
    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app
