"""Network bridge: live telemetry, map layers, and operator commands over
WebSocket + JSON (binary frames for voxel lists).

The simulation core advances in one background thread; every interaction
crosses a message-passing boundary: commands queue in and are applied at
tick boundaries, handlers read locked snapshots out. A slow client only
slows its own sender loop (latest-value semantics), never the stepper.
Protocol frozen in docs/protocol.md.
"""

from __future__ import annotations

import asyncio
import base64
import json
import struct
import threading
import time

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, Response

from .config import SimConfig
from .planning import nearest_free_cell, preprocess_grid
from .runtime import ScenarioScript, Simulator
from .world import load_world_file

PROTOCOL_VERSION = 1
VOXEL_MAGIC = b"NVS1"

NACK_REASONS = ("no_authority", "invalid_goal", "sim_paused", "bad_request", "unknown_kind")

TELEMETRY_HZ = 30.0
MAP_HZ = 2.0
VOXEL_HZ = 1.0


def envelope(msg_type: str, payload: dict, seq: int, t_sim: float) -> str:
    return json.dumps(
        {"v": PROTOCOL_VERSION, "seq": seq, "type": msg_type, "t_sim": round(t_sim, 6), "payload": payload},
        separators=(",", ":"),
    )


def pack_voxels(centers: np.ndarray) -> bytes:
    data = np.ascontiguousarray(centers, dtype="<f4")
    return VOXEL_MAGIC + struct.pack("<I", len(data)) + data.tobytes()


class SimServer:
    """Owns the simulator, its stepping thread, and the command queue."""

    def __init__(self, config: SimConfig, script: ScenarioScript | None = None,
                 time_scale: float | None = 1.0):
        self.config = config
        base_script = script or ScenarioScript(world=self._default_world(), timeout=3600.0,
                                               initial_position=(-8.0, -8.0, 1.2),
                                               initial_yaw=0.785398, name="operator_session")
        self.script = base_script
        self.time_scale = time_scale
        self.lock = threading.Lock()
        self.sim = Simulator(config, base_script)
        self.paused = False
        self._stop = False
        self._thread: threading.Thread | None = None
        self.operator_sid: int | None = None
        self._next_sid = 0
        self.applied_commands: list = []
        self._record_cursor = 0
        self.events: list = []

    @staticmethod
    def _default_world() -> str:
        from pathlib import Path

        for base in (Path.cwd(), Path(__file__).resolve().parents[2]):
            cand = base / "worlds" / "paper_world"
            if cand.exists():
                return str(cand)
        raise FileNotFoundError("no world descriptor found; pass a scenario")

    # --- stepping ---

    def step(self, n_ticks: int = 1):
        """Advance the simulation synchronously (used by tests and the
        background thread alike)."""
        with self.lock:
            if self.paused:
                return
            for _ in range(n_ticks):
                self.sim.step_tick()
            self._collect_events()

    def _collect_events(self):
        recs = self.sim.log.records
        while self._record_cursor < len(recs):
            r = recs[self._record_cursor]
            self._record_cursor += 1
            if r.get("type") in ("event", "command"):
                self.events.append(r)

    def _run_loop(self):
        dt = self.config.physics_dt
        chunk = max(1, int(0.01 / dt))  # step in ~10 ms batches
        start = time.perf_counter()
        while not self._stop:
            if self.paused:
                time.sleep(0.02)
                start = time.perf_counter() - self.sim.t_sim / (self.time_scale or 1.0)
                continue
            self.step(chunk)
            if self.time_scale and self.time_scale > 0:
                ahead = self.sim.t_sim / self.time_scale - (time.perf_counter() - start)
                if ahead > 0.002:
                    time.sleep(ahead)

    def start_background(self):
        if self._thread is None:
            self._thread = threading.Thread(target=self._run_loop, daemon=True)
            self._thread.start()

    def shutdown(self):
        self._stop = True
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    # --- session management ---

    def new_session(self) -> int:
        self._next_sid += 1
        return self._next_sid

    def claim_operator(self, sid: int) -> bool:
        with self.lock:
            if self.operator_sid is None or self.operator_sid == sid:
                self.operator_sid = sid
                return True
            return False

    def release_session(self, sid: int):
        with self.lock:
            if self.operator_sid == sid:
                self.operator_sid = None

    # --- snapshots ---

    def telemetry(self) -> dict:
        with self.lock:
            sim = self.sim
            est = sim.estimator.estimate
            goal = sim.planner.status.goal_xy
            return {
                "p": [float(x) for x in sim.state.xi],
                "q": [float(x) for x in sim.state.q],
                "v": [float(x) for x in sim.state.v],
                "est_p": [float(x) for x in est.pose.position],
                "est_q": [float(x) for x in est.pose.q],
                "goal": None if goal is None else [float(goal[0]), float(goal[1])],
                "mode": sim.mode,
                "paused": self.paused,
                "goals_reached": sim._goals_reached,
                "goals_total": sim._goals_total,
                "mission_complete": sim.mission_complete(),
            }

    def grid_snapshot(self):
        with self.lock:
            grid = self.sim.projected_grid()
            version = self.sim.gmap.version
        return grid, version

    def voxel_snapshot(self) -> np.ndarray:
        with self.lock:
            return self.sim.gmap.occupied_voxel_centers()

    def path_snapshot(self):
        with self.lock:
            path = self.sim.planner.status.path
            if path is None:
                return None
            return [[float(x), float(y)] for x, y in path.waypoints]

    def grid_bytes(self) -> bytes:
        grid, _ = self.grid_snapshot()
        return grid.cells.astype("<i1").tobytes()

    # --- commands ---

    def handle_command(self, sid: int, payload: dict) -> tuple[bool, dict]:
        """Validate + enqueue a command; returns (ok, ack/nack payload)."""
        kind = payload.get("kind")
        if kind not in ("set_goal", "teleop", "mode", "pause", "reset"):
            return False, {"reason": "unknown_kind", "detail": f"kind={kind!r}"}
        if self.operator_sid != sid:
            return False, {"reason": "no_authority", "detail": "another session holds command authority"}
        if self.paused and kind not in ("pause", "reset"):
            return False, {"reason": "sim_paused", "detail": "resume before commanding"}

        note = None
        applied = {"kind": kind}
        if kind == "set_goal":
            try:
                x, y = float(payload["x"]), float(payload["y"])
            except (KeyError, TypeError, ValueError):
                return False, {"reason": "bad_request", "detail": "set_goal needs numeric x, y"}
            with self.lock:
                world = self.sim.world
                if not world.contains_xy(x, y):
                    return False, {"reason": "invalid_goal", "detail": "goal outside world bounds"}
                pgrid = preprocess_grid(self.sim.projected_grid(), self.config.inflation_radius)
                cell = pgrid.cell_of((x, y))
                if pgrid.in_bounds(*cell) and not pgrid.walkable(*cell):
                    moved = nearest_free_cell(pgrid, cell, self.config.planner.goal_relocate_radius)
                    suggestion = None if moved is None else [float(c) for c in pgrid.center(moved)]
                    return False, {"reason": "invalid_goal", "detail": "goal cell is obstructed",
                                   "suggestion": suggestion}
                self.sim.enqueue_command({"kind": "set_goal", "xy": [x, y]})
            applied["xy"] = [x, y]
        elif kind == "teleop":
            try:
                v = [float(payload.get("vx", 0.0)), float(payload.get("vy", 0.0)), float(payload.get("vz", 0.0))]
                yaw_rate = float(payload.get("yaw_rate", 0.0))
            except (TypeError, ValueError):
                return False, {"reason": "bad_request", "detail": "teleop needs numeric velocities"}
            speed = float(np.linalg.norm(v))
            if speed > self.config.speed_limit:
                v = [c * self.config.speed_limit / speed for c in v]
                note = f"speed clamped from {speed:.2f} to {self.config.speed_limit:.2f} m/s"
            with self.lock:
                self.sim.enqueue_command({"kind": "teleop", "v": v, "yaw_rate": yaw_rate})
            applied["v"] = v
            applied["yaw_rate"] = yaw_rate
        elif kind == "mode":
            mode = {"auto": "click_and_fly", "manual": "manual"}.get(payload.get("mode"))
            if mode is None:
                return False, {"reason": "bad_request", "detail": "mode must be 'manual' or 'auto'"}
            with self.lock:
                self.sim.enqueue_command({"kind": "mode", "mode": mode})
            applied["mode"] = mode
        elif kind == "pause":
            self.paused = bool(payload.get("value", True))
            applied["value"] = self.paused
        elif kind == "reset":
            seed = int(payload.get("seed", self.config.rng_seed))
            self.reset(seed)
            applied["seed"] = seed
        ack = {"applied_t": self.sim.t_sim}
        if note:
            ack["note"] = note
            applied["note"] = note
        with self.lock:
            self.applied_commands.append({"sid": sid, "t": self.sim.t_sim, **applied})
        return True, ack

    def reset(self, seed: int):
        from dataclasses import replace

        with self.lock:
            self.config = replace(self.config, rng_seed=seed)
            self.sim = Simulator(self.config, self.script)
            self._record_cursor = 0
            self.events.clear()

    def serve_forever(self, host: str, port: int):
        import uvicorn

        self.start_background()
        app = build_app(self)
        print(f"serving on ws://{host}:{port}/ws (time scale "
              f"{'free-running' if not self.time_scale else self.time_scale})")
        uvicorn.run(app, host=host, port=port, log_level="warning")


def _grid_header(grid) -> dict:
    return {
        "shape": [int(grid.shape[0]), int(grid.shape[1])],
        "origin": [float(grid.origin_xy[0]), float(grid.origin_xy[1])],
        "cell": grid.cell_size,
    }


def _diff_rect(old: np.ndarray, new: np.ndarray):
    """Bounding rectangle of changed cells, or None when identical."""
    changed = old != new
    if not changed.any():
        return None
    xs, ys = np.nonzero(changed)
    x0, x1 = int(xs.min()), int(xs.max()) + 1
    y0, y1 = int(ys.min()), int(ys.max()) + 1
    return x0, y0, x1 - x0, y1 - y0


def build_app(server: SimServer) -> FastAPI:
    app = FastAPI(title="navsim service")

    @app.get("/status")
    def status():
        return JSONResponse(server.telemetry())

    @app.get("/map/grid.bin")
    def grid_bin():
        grid, version = server.grid_snapshot()
        headers = {
            "X-Grid-Shape": f"{grid.shape[0]},{grid.shape[1]}",
            "X-Grid-Version": str(version),
        }
        return Response(grid.cells.astype("<i1").tobytes(), media_type="application/octet-stream",
                        headers=headers)

    @app.get("/commands")
    def commands():
        with server.lock:
            return JSONResponse(list(server.applied_commands))

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        sid = server.new_session()
        seq = 0

        def nxt() -> int:
            nonlocal seq
            seq += 1
            return seq

        subscriptions: set = set()
        role = "observer"
        world = server.sim.world
        await ws.send_text(envelope("hello", {
            "protocol": PROTOCOL_VERSION,
            "session": sid,
            "role": role,
            "world_bounds": list(world.bounds),
            "config": {
                "speed_limit": server.config.speed_limit,
                "voxel_size": server.config.voxel_size,
                "map_dims": list(server.config.map_dims),
                "inflation_radius": server.config.inflation_radius,
            },
        }, nxt(), server.sim.t_sim))

        last_grid: np.ndarray | None = None
        last_grid_meta: dict | None = None
        event_cursor = len(server.events)
        last_path = None

        async def sender():
            nonlocal last_grid, last_grid_meta, event_cursor, last_path
            t_tel = t_map = t_vox = 0.0
            try:
                while True:
                    now = time.monotonic()
                    if "telemetry" in subscriptions and now - t_tel >= 1.0 / TELEMETRY_HZ:
                        t_tel = now
                        await ws.send_text(envelope("telemetry", server.telemetry(), nxt(), server.sim.t_sim))
                        path = server.path_snapshot()
                        if path != last_path and path is not None:
                            last_path = path
                            await ws.send_text(envelope("path", {"kind": "global", "waypoints": path},
                                                        nxt(), server.sim.t_sim))
                        while event_cursor < len(server.events):
                            ev = server.events[event_cursor]
                            event_cursor += 1
                            await ws.send_text(envelope("event", ev, nxt(), server.sim.t_sim))
                    if "map" in subscriptions and now - t_map >= 1.0 / MAP_HZ:
                        t_map = now
                        grid, version = server.grid_snapshot()
                        cells = grid.cells
                        if last_grid is None or last_grid.shape != cells.shape:
                            last_grid = cells.copy()
                            last_grid_meta = _grid_header(grid)
                            payload = dict(last_grid_meta)
                            payload["version"] = version
                            payload["data"] = base64.b64encode(cells.astype("<i1").tobytes()).decode()
                            await ws.send_text(envelope("map_keyframe", payload, nxt(), server.sim.t_sim))
                        else:
                            rect = _diff_rect(last_grid, cells)
                            if rect is not None:
                                x0, y0, w, h = rect
                                sub = cells[x0 : x0 + w, y0 : y0 + h]
                                last_grid[x0 : x0 + w, y0 : y0 + h] = sub
                                await ws.send_text(envelope("map_delta", {
                                    "version": version, "x0": x0, "y0": y0, "w": w, "h": h,
                                    "data": base64.b64encode(sub.astype("<i1").tobytes()).decode(),
                                }, nxt(), server.sim.t_sim))
                    if "voxels" in subscriptions and now - t_vox >= 1.0 / VOXEL_HZ:
                        t_vox = now
                        await ws.send_bytes(pack_voxels(server.voxel_snapshot()))
                    await asyncio.sleep(0.005)
            except (WebSocketDisconnect, RuntimeError):
                pass

        send_task = asyncio.create_task(sender())
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                    mtype = msg.get("type")
                    payload = msg.get("payload") or {}
                    cseq = msg.get("seq", 0)
                except json.JSONDecodeError:
                    await ws.send_text(envelope("nack", {"reason": "bad_request",
                                                         "detail": "malformed JSON"}, nxt(), server.sim.t_sim))
                    continue
                if mtype == "subscribe":
                    topics = payload.get("topics") or []
                    subscriptions.update(topics)
                    if payload.get("role") == "operator":
                        if server.claim_operator(sid):
                            role = "operator"
                        else:
                            await ws.send_text(envelope("nack", {
                                "cmd_seq": cseq, "reason": "no_authority",
                                "detail": "operator slot already taken"}, nxt(), server.sim.t_sim))
                            continue
                    await ws.send_text(envelope("ack", {"cmd_seq": cseq, "topics": sorted(subscriptions),
                                                        "role": role}, nxt(), server.sim.t_sim))
                elif mtype == "command":
                    ok, result = server.handle_command(sid, payload)
                    result["cmd_seq"] = cseq
                    await ws.send_text(envelope("ack" if ok else "nack", result, nxt(), server.sim.t_sim))
                else:
                    await ws.send_text(envelope("nack", {"cmd_seq": msg.get("seq", 0),
                                                         "reason": "bad_request",
                                                         "detail": f"unknown type {mtype!r}"},
                                                nxt(), server.sim.t_sim))
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()
            server.release_session(sid)

    return app
