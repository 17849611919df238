from __future__ import annotations

import io
import json
import os
import time

from starlette.testclient import TestClient

from graspsim.gateway import SessionConfig, SessionEngine
from graspsim.server import create_app

GOLDEN_SCHEMA = os.path.join(os.path.dirname(__file__), "golden", "ws_schema.json")


def make_engine(scenario, paused=True) -> SessionEngine:
    engine = SessionEngine(
        SessionConfig(), scenario, steering_source="live", trace_fh=io.StringIO()
    )
    engine.paused = paused
    return engine


def recv_type(ws, wanted: str, tries: int = 50) -> dict:
    """Read frames until one of the wanted type arrives (snapshots interleave)."""
    for _ in range(tries):
        msg = json.loads(ws.receive_text())
        if msg["type"] == wanted:
            return msg
    raise AssertionError(f"no {wanted!r} message received")


def test_connect_receives_snapshot_then_acks(approach_scenario):
    engine = make_engine(approach_scenario)
    app = create_app(engine)
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws:
            first = json.loads(ws.receive_text())
            assert first["type"] == "snapshot"
            assert first["phase"] == "scanning"
            ws.send_text(json.dumps({"type": "set_tilt", "deg": 45, "ref": "abc"}))
            ack = recv_type(ws, "ack")
            assert ack["ref"] == "abc"


def test_every_message_gets_exactly_one_response(approach_scenario):
    engine = make_engine(approach_scenario)
    app = create_app(engine)
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws:
            ws.receive_text()  # greeting snapshot
            refs = [f"m{i}" for i in range(5)]
            for i, ref in enumerate(refs):
                ws.send_text(
                    json.dumps({"type": "set_tilt", "deg": float(i), "ref": ref})
                )
            got = []
            while len(got) < len(refs):
                msg = json.loads(ws.receive_text())
                if msg["type"] in ("ack", "error"):
                    got.append(msg["ref"])
            assert got == refs


def test_malformed_json_answered_with_error_and_survives(approach_scenario):
    engine = make_engine(approach_scenario)
    app = create_app(engine)
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws:
            ws.receive_text()
            ws.send_text("this is not json")
            err = recv_type(ws, "error")
            assert "JSON" in err["reason"] or "json" in err["reason"]
            ws.send_text(json.dumps({"type": "pause", "ref": "p"}))
            assert recv_type(ws, "ack")["ref"] == "p"


def test_second_client_is_read_only_observer(approach_scenario):
    engine = make_engine(approach_scenario)
    app = create_app(engine)
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws1, client.websocket_connect("/ws") as ws2:
            ws1.receive_text()
            ws2.receive_text()
            ws2.send_text(json.dumps({"type": "set_tilt", "deg": 10, "ref": "x"}))
            err = recv_type(ws2, "error")
            assert "read-only" in err["reason"]
            ws1.send_text(json.dumps({"type": "set_tilt", "deg": 10, "ref": "y"}))
            assert recv_type(ws1, "ack")["ref"] == "y"


def test_step_advances_sim_time_and_snapshots_flow(approach_scenario):
    engine = make_engine(approach_scenario)
    app = create_app(engine)
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws:
            ws.receive_text()
            ws.send_text(json.dumps({"type": "step", "n": 40, "ref": "s"}))
            recv_type(ws, "ack")
            deadline = time.time() + 5.0
            while engine.t_ms < 400 and time.time() < deadline:
                time.sleep(0.01)
            assert engine.t_ms >= 400
            snap = recv_type(ws, "snapshot")
            assert snap["t_ms"] >= 0
            assert snap["paused"] is True


def test_snapshots_continue_while_paused(approach_scenario):
    engine = make_engine(approach_scenario)
    app = create_app(engine)
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws:
            ws.receive_text()
            t0 = time.time()
            count = 0
            while time.time() - t0 < 1.0:
                msg = json.loads(ws.receive_text())
                if msg["type"] == "snapshot":
                    count += 1
                    assert msg["t_ms"] == 0  # frozen sim time
            # frame cadence is ~6 Hz; allow generous scheduling slop
            assert 3 <= count <= 9


def test_http_index_serves_placeholder(approach_scenario):
    engine = make_engine(approach_scenario)
    app = create_app(engine, ui_dir=None)
    with TestClient(app) as client:
        page = client.get("/")
        assert page.status_code == 200
        assert "graspsim" in page.text


def test_static_ui_dir_served(approach_scenario, tmp_path):
    (tmp_path / "index.html").write_text("<html><body>ui bundle</body></html>")
    engine = make_engine(approach_scenario)
    app = create_app(engine, ui_dir=str(tmp_path))
    with TestClient(app) as client:
        page = client.get("/")
        assert "ui bundle" in page.text


def test_message_schema_golden(approach_scenario):
    """Freeze the wire schema: full client vocabulary and the server shapes."""
    engine = make_engine(approach_scenario)
    engine.tick_once()
    snap = engine.snapshot()
    schema = {
        "client_messages": [
            {"type": "set_velocity", "vx": 100.0, "vy": 0.0, "vz": 0.0, "ref": "1"},
            {"type": "set_tilt", "deg": 70.0, "ref": "2"},
            {
                "type": "spawn_object",
                "label": "cup",
                "center": [300.0, 0.0, 0.0],
                "radius": 25.0,
                "ref": "3",
            },
            {"type": "remove_object", "id": "obj1", "ref": "4"},
            {"type": "reset", "seed": 1, "ref": "5"},
            {"type": "pause", "ref": "6"},
            {"type": "resume", "ref": "7"},
            {"type": "step", "n": 10, "ref": "8"},
            {"type": "set_param", "key": "d_grasp_mm", "value": 120.0, "ref": "9"},
        ],
        "server_messages": {
            "ack": ["ref", "type"],
            "error": ["reason", "ref", "type"],
            "snapshot": sorted(snap.keys()),
        },
        "snapshot_sections": {
            "telemetry": sorted(snap["telemetry"].keys()),
            "actuator": sorted(snap["actuator"].keys()),
            "world": sorted(snap["world"].keys()),
            "world.hand": sorted(snap["world"]["hand"].keys()),
            "limits": sorted(snap["limits"].keys()),
        },
    }
    with open(GOLDEN_SCHEMA, "r", encoding="utf-8") as fh:
        golden = json.load(fh)
    assert schema == golden
    # and the example client messages are all accepted or well-formed errors
    for msg in schema["client_messages"]:
        response = engine.handle_client_msg(dict(msg))
        assert response["type"] in ("ack", "error")
        assert response["ref"] == msg["ref"]
