import base64
import json
import struct

import numpy as np
import pytest
from starlette.testclient import TestClient

from navsim.config import SimConfig
from navsim.runtime import ScenarioScript
from navsim.service import VOXEL_MAGIC, SimServer, build_app


@pytest.fixture()
def server():
    cfg = SimConfig(rng_seed=11)
    script = ScenarioScript(world="worlds/paper_world", initial_position=(-8.0, -8.0, 1.2),
                            timeout=3600.0, name="svc")
    return SimServer(cfg, script, time_scale=None)  # stepped externally


@pytest.fixture()
def client(server):
    with TestClient(build_app(server)) as c:
        yield c


def recv_type(ws, wanted, limit=200):
    for _ in range(limit):
        msg = json.loads(ws.receive_text())
        if msg["type"] == wanted:
            return msg
    raise AssertionError(f"no {wanted!r} message within {limit} frames")


def test_hello_handshake(server, client):
    with client.websocket_connect("/ws") as ws:
        hello = json.loads(ws.receive_text())
        assert hello["type"] == "hello"
        assert hello["v"] == 1
        assert hello["payload"]["protocol"] == 1
        assert hello["payload"]["world_bounds"] == [-10.0, 10.0, -10.0, 10.0]
        assert hello["payload"]["role"] == "observer"


def test_telemetry_subscription(server, client):
    server.step(400)
    with client.websocket_connect("/ws") as ws:
        ws.receive_text()
        ws.send_text(json.dumps({"type": "subscribe", "seq": 1,
                                 "payload": {"topics": ["telemetry"]}}))
        ack = recv_type(ws, "ack")
        assert ack["payload"]["topics"] == ["telemetry"]
        tel = recv_type(ws, "telemetry")
        p = tel["payload"]["p"]
        assert np.linalg.norm(np.array(p[:2]) - [-8.0, -8.0]) < 0.5


def test_operator_authority_single(server, client):
    with client.websocket_connect("/ws") as ws1, client.websocket_connect("/ws") as ws2:
        ws1.receive_text()
        ws2.receive_text()
        ws1.send_text(json.dumps({"type": "subscribe", "seq": 1,
                                  "payload": {"topics": [], "role": "operator"}}))
        ack = recv_type(ws1, "ack")
        assert ack["payload"]["role"] == "operator"
        ws2.send_text(json.dumps({"type": "subscribe", "seq": 2,
                                  "payload": {"topics": [], "role": "operator"}}))
        nack = recv_type(ws2, "nack")
        assert nack["payload"]["reason"] == "no_authority"


def test_commands_require_authority(server, client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_text()
        ws.send_text(json.dumps({"type": "command", "seq": 5,
                                 "payload": {"kind": "set_goal", "x": 0.0, "y": 0.0}}))
        nack = recv_type(ws, "nack")
        assert nack["payload"]["reason"] == "no_authority"
        assert nack["payload"]["cmd_seq"] == 5


def claim(ws):
    ws.send_text(json.dumps({"type": "subscribe", "seq": 1,
                             "payload": {"topics": ["telemetry"], "role": "operator"}}))
    return recv_type(ws, "ack")


def test_set_goal_ack_and_planner_reaction(server, client):
    # observe enough of the world that the goal cell is known free
    server.step(1200)
    with client.websocket_connect("/ws") as ws:
        ws.receive_text()
        claim(ws)
        ws.send_text(json.dumps({"type": "command", "seq": 9,
                                 "payload": {"kind": "set_goal", "x": -6.0, "y": -8.0}}))
        ack = recv_type(ws, "ack")
        assert ack["payload"]["cmd_seq"] == 9
        # command applies at the next tick boundary; global loop replans
        # within two periods (2 * 1/15 s = 54 ticks at 400 Hz)
        server.step(60)
        tel = recv_type(ws, "telemetry")
        assert tel["payload"]["goal"] == [-6.0, -8.0]


def test_set_goal_in_obstacle_nacked_with_suggestion(server, client):
    server.step(1200)  # map the surroundings first
    with client.websocket_connect("/ws") as ws:
        ws.receive_text()
        claim(ws)
        # center pillar is occupied once observed; goal inside it is rejected.
        # force observation by flying a survey? The pillar may be unseen from
        # the corner, so plant occupancy directly for a deterministic check.
        from navsim.mapping import logit

        with server.lock:
            gmap = server.sim.gmap
            i, j, _ = gmap.voxel_index((0.0, 0.0, 1.0))
            for k in range(3, 8):
                gmap.logodds[i, j, k] = logit(0.95)
        ws.send_text(json.dumps({"type": "command", "seq": 3,
                                 "payload": {"kind": "set_goal", "x": 0.0, "y": 0.0}}))
        nack = recv_type(ws, "nack")
        assert nack["payload"]["reason"] == "invalid_goal"
        sug = nack["payload"]["suggestion"]
        assert sug is not None
        assert 0.2 < np.hypot(sug[0], sug[1]) <= 1.0 + 0.3


def test_goal_outside_bounds_nacked(server, client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_text()
        claim(ws)
        ws.send_text(json.dumps({"type": "command", "seq": 4,
                                 "payload": {"kind": "set_goal", "x": 99.0, "y": 0.0}}))
        nack = recv_type(ws, "nack")
        assert nack["payload"]["reason"] == "invalid_goal"


def test_teleop_clamped_with_note(server, client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_text()
        claim(ws)
        ws.send_text(json.dumps({"type": "command", "seq": 7,
                                 "payload": {"kind": "teleop", "vx": 2.0, "vy": 0.0, "vz": 0.0}}))
        ack = recv_type(ws, "ack")
        assert "clamped" in ack["payload"]["note"]
    cmds = client.get("/commands").json()
    assert cmds[-1]["kind"] == "teleop"
    assert cmds[-1]["v"][0] == pytest.approx(1.0)


def apply_delta(canvas, payload):
    sub = np.frombuffer(base64.b64decode(payload["data"]), dtype=np.int8)
    sub = sub.reshape(payload["w"], payload["h"])
    canvas[payload["x0"]:payload["x0"] + payload["w"], payload["y0"]:payload["y0"] + payload["h"]] = sub


def test_map_keyframe_delta_reassembly(server, client):
    server.step(800)
    with client.websocket_connect("/ws") as ws:
        ws.receive_text()
        ws.send_text(json.dumps({"type": "subscribe", "seq": 1, "payload": {"topics": ["map"]}}))
        recv_type(ws, "ack")
        kf = recv_type(ws, "map_keyframe")
        shape = kf["payload"]["shape"]
        canvas = np.frombuffer(base64.b64decode(kf["payload"]["data"]), dtype=np.int8).reshape(shape).copy()
        # observe more of the world in slices so several deltas stream out
        deltas = 0
        for _ in range(4):
            server.step(400)
            msg = json.loads(ws.receive_text())
            if msg["type"] == "map_delta":
                apply_delta(canvas, msg["payload"])
                deltas += 1
        # converge: after the last change the session grid syncs to the live
        # grid within one map period, then canvas must match byte-for-byte
        want = np.frombuffer(client.get("/map/grid.bin").content, dtype=np.int8).reshape(shape)
        for _ in range(60):
            if np.array_equal(canvas, want):
                break
            msg = json.loads(ws.receive_text())
            if msg["type"] == "map_delta":
                apply_delta(canvas, msg["payload"])
                deltas += 1
                want = np.frombuffer(client.get("/map/grid.bin").content, dtype=np.int8).reshape(shape)
        assert deltas >= 1
        assert canvas.tobytes() == want.tobytes()


def test_voxel_binary_frames(server, client):
    server.step(800)
    with client.websocket_connect("/ws") as ws:
        ws.receive_text()
        ws.send_text(json.dumps({"type": "subscribe", "seq": 1, "payload": {"topics": ["voxels"]}}))
        recv_type(ws, "ack")
        raw = ws.receive_bytes()
        assert raw[:4] == VOXEL_MAGIC
        (count,) = struct.unpack_from("<I", raw, 4)
        pts = np.frombuffer(raw[8:], dtype="<f4").reshape(-1, 3)
        assert len(pts) == count
        if count:
            assert np.isfinite(pts).all()


def test_reset_determinism(server, client):
    def run_once():
        with client.websocket_connect("/ws") as ws:
            ws.receive_text()
            claim(ws)
            ws.send_text(json.dumps({"type": "command", "seq": 2,
                                     "payload": {"kind": "reset", "seed": 42}}))
            recv_type(ws, "ack")
            server.step(2000)  # 5 s sim
            with server.lock:
                return (server.sim.state.xi.copy(), server.sim.state.q.copy(),
                        server.sim.estimator.estimate.pose.position.copy())
    a = run_once()
    b = run_once()
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_pause_blocks_commands_and_stepping(server, client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_text()
        claim(ws)
        ws.send_text(json.dumps({"type": "command", "seq": 2, "payload": {"kind": "pause", "value": True}}))
        recv_type(ws, "ack")
        t0 = server.sim.t_sim
        server.step(100)
        assert server.sim.t_sim == t0  # paused: stepping is a no-op
        ws.send_text(json.dumps({"type": "command", "seq": 3,
                                 "payload": {"kind": "set_goal", "x": -6.0, "y": -8.0}}))
        nack = recv_type(ws, "nack")
        assert nack["payload"]["reason"] == "sim_paused"
        ws.send_text(json.dumps({"type": "command", "seq": 4, "payload": {"kind": "pause", "value": False}}))
        recv_type(ws, "ack")
        server.step(100)
        assert server.sim.t_sim > t0


def test_stepping_independent_of_clients(server, client):
    import time as _time

    contexts = [client.websocket_connect("/ws") for _ in range(4)]
    sockets = [c.__enter__() for c in contexts]
    try:
        for ws in sockets:
            ws.receive_text()
            ws.send_text(json.dumps({"type": "subscribe", "seq": 1,
                                     "payload": {"topics": ["telemetry", "map", "voxels"]}}))
        t0 = _time.perf_counter()
        server.step(400)
        with_clients = _time.perf_counter() - t0
    finally:
        for c in contexts:
            c.__exit__(None, None, None)
    t0 = _time.perf_counter()
    server.step(400)
    without = _time.perf_counter() - t0
    # the stepper never blocks on sessions; generous 3x guard for CI noise
    assert with_clients < max(3.0 * without, without + 1.0)


def test_malformed_message_nacked(server, client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_text()
        ws.send_text("this is not json")
        nack = recv_type(ws, "nack")
        assert nack["payload"]["reason"] == "bad_request"
        ws.send_text(json.dumps({"type": "mystery", "seq": 1, "payload": {}}))
        nack = recv_type(ws, "nack")
        assert nack["payload"]["reason"] == "bad_request"


def test_unknown_command_kind_nacked(server, client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_text()
        claim(ws)
        ws.send_text(json.dumps({"type": "command", "seq": 2, "payload": {"kind": "warp"}}))
        nack = recv_type(ws, "nack")
        assert nack["payload"]["reason"] == "unknown_kind"
