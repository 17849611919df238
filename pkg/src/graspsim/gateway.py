"""Operational shell: the fixed-timestep session engine and its tick loop.

One engine owns one world and one controller.  Every base step (default
10 ms simulated) it drains queued client mutations, samples whichever
sensors are due at their own periods, feeds the controller a tick, applies
any accepted actuator command back to the world, and appends trace records.
Realtime mode paces the loop against the wall clock; fast mode free-runs.
Either way the simulated timeline, and therefore the trace, is identical.

Wall-clock tick latencies deliberately never enter the trace (traces are
byte-identical across runs); they are returned on the session result and
optionally written to a `<trace>.timing` sidecar.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

from .controller import ControllerConfig, GraspController, TickInput
from .perception import Detection, PerceptionConfig, TofSample, Vec3
from .scenario import Scenario
from .simworld import (
    AccelModel,
    CameraModel,
    SimObject,
    Steering,
    TofModel,
    WorldState,
    apply_actuation,
    project_detections,
    simulate_accel,
    simulate_tof,
    step_world,
)
from .trace import LIVE_TUNABLE, TraceWriter, WorldObjSnapshot, apply_param


@dataclass(frozen=True)
class SessionConfig:
    seed: Optional[int] = None  # overrides the scenario seed when set
    mode: str = "fast"  # "fast" | "realtime"
    base_step_ms: int = 10
    duration_ms: Optional[int] = None  # overrides the scenario duration when set
    perception: PerceptionConfig = field(default_factory=PerceptionConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    camera: CameraModel = field(default_factory=CameraModel)
    tof: TofModel = field(default_factory=TofModel)
    accel: AccelModel = field(default_factory=AccelModel)
    ref_axis: Vec3 = (0.0, 0.0, 1.0)
    trace_path: Optional[str] = None
    port: int = 8750

    def __post_init__(self) -> None:
        if self.mode not in ("fast", "realtime"):
            raise ValueError("mode must be 'fast' or 'realtime'")
        if self.base_step_ms <= 0:
            raise ValueError("base_step_ms must be positive")


def base_step_from_periods(*periods_ms: float, default: int = 10) -> int:
    """gcd of the sensor periods when they are all integral, else the default."""
    if all(abs(p - round(p)) < 1e-9 for p in periods_ms):
        step = 0
        for p in periods_ms:
            step = math.gcd(step, int(round(p)))
        if step > 0:
            return step
    return default


def config_from_dict(raw: dict) -> SessionConfig:
    """Build a SessionConfig from a parsed JSON config file."""
    kwargs: dict = {}
    if "perception" in raw:
        fields = dict(raw["perception"])
        if "accel_mag_band_g" in fields:
            fields["accel_mag_band_g"] = tuple(fields["accel_mag_band_g"])
        kwargs["perception"] = PerceptionConfig(**fields)
    if "controller" in raw:
        kwargs["controller"] = ControllerConfig(**raw["controller"])
    if "camera" in raw:
        kwargs["camera"] = CameraModel(**raw["camera"])
    if "tof" in raw:
        kwargs["tof"] = TofModel(**raw["tof"])
    if "accel" in raw:
        kwargs["accel"] = AccelModel(**raw["accel"])
    if "ref_axis" in raw:
        kwargs["ref_axis"] = tuple(raw["ref_axis"])
    for key in ("seed", "mode", "base_step_ms", "duration_ms", "port"):
        if key in raw:
            kwargs[key] = raw[key]
    return SessionConfig(**kwargs)


def load_config_file(path: str) -> SessionConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


@dataclass
class SessionResult:
    trace_path: Optional[str]
    ticks: int
    end_t_ms: int
    commands: int
    tick_latencies_ms: list[float]
    exit_reason: str = "completed"


class ClientError(ValueError):
    """A client message that must be answered with error{reason}."""


class SessionEngine:
    """Single owner of world + controller state, stepped one tick at a time."""

    def __init__(
        self,
        cfg: SessionConfig,
        scenario: Scenario,
        steering_source: str = "scripted",
        trace_fh=None,
    ) -> None:
        if steering_source not in ("scripted", "live"):
            raise ValueError("steering_source must be 'scripted' or 'live'")
        self.cfg = cfg
        self.scenario = scenario
        self.steering_source = steering_source
        self.seed = cfg.seed if cfg.seed is not None else scenario.seed
        self.duration_ms = cfg.duration_ms if cfg.duration_ms is not None else scenario.duration_ms
        self.world: WorldState = scenario.build_world(self.seed)
        self.controller = GraspController(
            perception=cfg.perception, config=cfg.controller, ref_axis=cfg.ref_axis
        )
        self.live_steering = Steering()
        self.t_ms = 0
        self.ticks = 0
        self.paused = False
        self.ended = False
        self.pending_steps = 0
        self.command_count = 0
        self.tick_latencies_ms: list[float] = []
        self.latest_detections: list[Detection] = []
        self.latest_output = None
        self.last_frame_t: Optional[int] = None
        self.snapshot_events: list[dict] = []
        self._queue: list[dict] = []
        self._next_object_id = 1
        # Sensor due times accumulate in float ms; a sensor fires on the
        # first tick at or past its due time.
        self._due = {
            "frame": 0.0,
            "tof": 0.0,
            "accel": 0.0,
        }
        self._writer = TraceWriter(trace_fh) if trace_fh is not None else None
        if self._writer is not None:
            self._writer.meta(0, self.seed, self.sim_config())

    # ------------------------------------------------------------------
    # configuration identity

    def sim_config(self) -> dict:
        """Everything that shapes the simulated timeline; excludes paths,
        ports, and pacing mode so identical sessions hash identically."""
        return {
            "perception": _jsonable(asdict(self.cfg.perception)),
            "controller": asdict(self.cfg.controller),
            "camera": asdict(self.cfg.camera),
            "tof": asdict(self.cfg.tof),
            "accel": asdict(self.cfg.accel),
            "ref_axis": list(self.cfg.ref_axis),
            "session": {
                "seed": self.seed,
                "base_step_ms": self.cfg.base_step_ms,
                "duration_ms": self.duration_ms,
                "d_attach_mm": self.scenario.d_attach_mm,
                "max_speed_mm_s": self.scenario.max_speed_mm_s,
            },
        }

    # ------------------------------------------------------------------
    # client messages

    def handle_client_msg(self, msg: object) -> dict:
        """Validate and enqueue one client message; exactly one ack or error."""
        if not isinstance(msg, dict):
            return {"type": "error", "ref": None, "reason": "message must be a JSON object"}
        ref = msg.get("ref")
        try:
            if "type" not in msg:
                raise ClientError("message must carry a 'type' field")
            response = self._dispatch(msg)
        except ClientError as exc:
            return {"type": "error", "ref": ref, "reason": str(exc)}
        except (TypeError, ValueError, KeyError) as exc:
            return {"type": "error", "ref": ref, "reason": f"malformed payload: {exc}"}
        response.setdefault("type", "ack")
        response["ref"] = ref
        return response

    def _dispatch(self, msg: dict) -> dict:
        kind = msg["type"]
        if self.ended and kind not in ("pause", "resume"):
            raise ClientError("session ended")
        if kind == "set_velocity":
            v = (float(msg["vx"]), float(msg["vy"]), float(msg["vz"]))
            speed = math.sqrt(v[0] ** 2 + v[1] ** 2 + v[2] ** 2)
            if speed > self.scenario.max_speed_mm_s + 1e-9:
                raise ClientError(
                    f"speed {speed:.1f} exceeds max {self.scenario.max_speed_mm_s:.1f} mm/s"
                )
            self._queue.append({"op": "velocity", "v": v})
        elif kind == "set_tilt":
            deg = float(msg["deg"])
            if not -180.0 <= deg <= 180.0:
                raise ClientError("tilt must be within [-180, 180] degrees")
            self._queue.append({"op": "tilt", "deg": deg})
        elif kind == "spawn_object":
            radius = float(msg["radius"])
            if radius <= 0:
                raise ClientError("radius must be positive")
            center = msg["center"]
            if not (isinstance(center, (list, tuple)) and len(center) == 3):
                raise ClientError("center must be [x, y, z]")
            self._queue.append(
                {
                    "op": "spawn",
                    "label": str(msg.get("label", "object")),
                    "center": [float(c) for c in center],
                    "radius": radius,
                    "class_id": int(msg.get("class_id", 0)),
                }
            )
        elif kind == "remove_object":
            obj_id = str(msg["id"])
            if all(o.id != obj_id for o in self.world.objects):
                raise ClientError(f"unknown object id {obj_id!r}")
            self._queue.append({"op": "remove", "id": obj_id})
        elif kind == "reset":
            seed = int(msg.get("seed", self.seed))
            self._queue.append({"op": "reset", "seed": seed})
        elif kind == "pause":
            self.paused = True
        elif kind == "resume":
            self.paused = False
            self.pending_steps = 0
        elif kind == "step":
            n = int(msg.get("n", 1))
            if n < 1:
                raise ClientError("step count must be >= 1")
            if not self.paused:
                raise ClientError("step requires the session to be paused")
            self.pending_steps += n
        elif kind == "set_param":
            key = str(msg["key"])
            if key not in LIVE_TUNABLE:
                raise ClientError(f"parameter {key!r} is not live-tunable")
            value = float(msg["value"])
            self._validate_param(key, value)
            self._queue.append({"op": "param", "key": key, "value": value})
        else:
            raise ClientError(f"unknown message type {kind!r}")
        return {}

    def _validate_param(self, key: str, value: float) -> None:
        group, typ = LIVE_TUNABLE[key]
        try:
            if group == "perception":
                replace(self.controller.perception, **{key: typ(value)})
            else:
                replace(self.controller.config, **{key: typ(value)})
        except ValueError as exc:
            raise ClientError(f"invalid value for {key!r}: {exc}") from None

    # ------------------------------------------------------------------
    # the tick loop body

    def _drain_queue(self) -> bool:
        reset_requested = False
        for item in self._queue:
            op = item["op"]
            if op == "velocity":
                self.live_steering = replace(self.live_steering, velocity=item["v"])
            elif op == "tilt":
                self.live_steering = replace(self.live_steering, tilt_target_deg=item["deg"])
            elif op == "spawn":
                obj_id = f"obj{self._next_object_id}"
                self._next_object_id += 1
                self.world.objects.append(
                    SimObject(
                        id=obj_id,
                        label=item["label"],
                        class_id=item["class_id"],
                        center=item["center"],
                        radius=item["radius"],
                    )
                )
            elif op == "remove":
                self.world.objects = [o for o in self.world.objects if o.id != item["id"]]
            elif op == "reset":
                fresh = self.scenario.build_world(item["seed"])
                fresh.t_ms = self.t_ms
                self.world = fresh
                self.live_steering = Steering()
                reset_requested = True
                if self._writer is not None:
                    self._writer.write(
                        self.t_ms, "meta", {"event": "reset", "seed": item["seed"]}
                    )
            elif op == "param":
                apply_param(self.controller, item["key"], item["value"])
                if self._writer is not None:
                    self._writer.write(
                        self.t_ms,
                        "meta",
                        {"event": "set_param", "key": item["key"], "value": float(item["value"])},
                    )
        self._queue.clear()
        return reset_requested

    def current_steering(self) -> Steering:
        if self.steering_source == "live":
            return self.live_steering
        return self.scenario.steering_at(self.t_ms)

    def tick_once(self) -> bool:
        """Advance one base step; returns True when a camera frame fired."""
        if self.ended:
            raise RuntimeError("session already ended")
        t = self.t_ms
        started = time.perf_counter()

        reset_requested = self._drain_queue()
        steering = self.current_steering()

        frame: Optional[list[Detection]] = None
        tof: Optional[TofSample] = None
        accel = None
        if t >= self._due["frame"] - 1e-9:
            self._due["frame"] += self.cfg.camera.frame_period_ms
            frame = project_detections(self.world, self.cfg.camera, self.world.rng)
        if t >= self._due["tof"] - 1e-9:
            self._due["tof"] += self.cfg.tof.period_ms
            tof = simulate_tof(self.world, self.cfg.tof, self.world.rng)
        if t >= self._due["accel"] - 1e-9:
            self._due["accel"] += self.cfg.accel.period_ms
            accel = simulate_accel(self.world, self.cfg.accel, self.world.rng)

        if self._writer is not None:
            if frame is not None:
                self._writer.write(t, "frame", {"detections": tuple(frame)})
            if tof is not None:
                payload = {"status": tof.status.value}
                if tof.valid:
                    payload["range_mm"] = tof.range_mm
                self._writer.write(t, "tof", payload)
            if accel is not None:
                self._writer.write(
                    t, "accel", {"ax": accel.a[0], "ay": accel.a[1], "az": accel.a[2]}
                )

        output = self.controller.tick(
            TickInput(t_ms=t, frame=frame, tof=tof, accel=accel, reset=reset_requested)
        )
        self.latest_output = output
        if frame is not None:
            self.latest_detections = list(frame)
            self.last_frame_t = t

        for tr in output.transitions:
            payload = {
                "from": tr.from_phase.value,
                "to": tr.to_phase.value,
                "reason": tr.reason.value,
            }
            self.snapshot_events.append({"t_ms": t, "kind": "transition", **payload})
            if self._writer is not None:
                self._writer.write(t, "state", payload)
        for cmd in output.commands:
            self.command_count += 1
            self.snapshot_events.append(
                {"t_ms": t, "kind": "cmd", "action": cmd.action.value}
            )
            if self._writer is not None:
                self._writer.write(t, "cmd", {"action": cmd.action.value})
            apply_actuation(self.world, cmd, self.scenario.d_attach_mm)

        if frame is not None and self._writer is not None:
            self._writer.write(t, "world", self._world_payload())

        step_world(self.world, steering, self.cfg.base_step_ms)
        self.t_ms = t + self.cfg.base_step_ms
        self.ticks += 1
        self.tick_latencies_ms.append((time.perf_counter() - started) * 1000.0)

        if self.t_ms >= self.duration_ms:
            self.finish()
        return frame is not None

    def _world_payload(self) -> dict:
        w = self.world
        return {
            "hx": w.hand_pos[0],
            "hy": w.hand_pos[1],
            "hz": w.hand_pos[2],
            "yaw": w.yaw_deg,
            "pitch": w.pitch_deg,
            "roll": w.roll_deg,
            "closed": w.hand_closed,
            "objects": tuple(
                WorldObjSnapshot(
                    id=o.id,
                    label=o.label,
                    class_id=o.class_id,
                    x=o.center[0],
                    y=o.center[1],
                    z=o.center[2],
                    radius=o.radius,
                    attached=o.attached,
                )
                for o in w.objects
            ),
        }

    def finish(self) -> None:
        if self.ended:
            return
        self.ended = True
        if self._writer is not None:
            self._writer.write(self.t_ms, "meta", {"event": "end", "ticks": self.ticks})

    # ------------------------------------------------------------------
    # snapshots

    def snapshot(self) -> dict:
        """Complete, self-describing state for rendering; no deltas."""
        out = self.latest_output
        telemetry = out.telemetry if out is not None else None
        fsm = self.controller.fsm
        last_cmd = self.controller.last_cmd
        cfg = self.controller.perception
        events = self.snapshot_events
        self.snapshot_events = []
        return {
            "type": "snapshot",
            "t_ms": self.t_ms,
            "phase": fsm.phase.value,
            "confirm_count": fsm.confirm_count,
            "paused": self.paused,
            "ended": self.ended,
            "telemetry": {
                "filtered_tof_mm": (
                    telemetry.filtered_tof.range_mm
                    if telemetry is not None
                    and telemetry.filtered_tof is not None
                    and telemetry.filtered_tof.valid
                    else None
                ),
                "tof_status": (
                    telemetry.filtered_tof.status.value
                    if telemetry is not None and telemetry.filtered_tof is not None
                    else None
                ),
                "tilt_deg": telemetry.tilt_deg if telemetry is not None else None,
                "gesture": (
                    telemetry.gesture_status.value if telemetry is not None else "inactive"
                ),
                "target": (
                    _detection_json(telemetry.selected_target)
                    if telemetry is not None and telemetry.selected_target is not None
                    else None
                ),
            },
            "detections": [_detection_json(d) for d in self.latest_detections],
            "actuator": {
                "hand_closed": self.world.hand_closed,
                "last_action": last_cmd.action.value if last_cmd is not None else None,
                "last_cmd_t_ms": last_cmd.t_ms if last_cmd is not None else None,
            },
            "world": {
                "hand": {
                    "x": self.world.hand_pos[0],
                    "y": self.world.hand_pos[1],
                    "z": self.world.hand_pos[2],
                    "yaw_deg": self.world.yaw_deg,
                    "pitch_deg": self.world.pitch_deg,
                    "roll_deg": self.world.roll_deg,
                },
                "objects": [
                    {
                        "id": o.id,
                        "label": o.label,
                        "class_id": o.class_id,
                        "x": o.center[0],
                        "y": o.center[1],
                        "z": o.center[2],
                        "radius": o.radius,
                        "attached": o.attached,
                    }
                    for o in self.world.objects
                ],
                "attached_id": next(
                    (o.id for o in self.world.objects if o.attached), None
                ),
            },
            "limits": {
                "tilt_thresh_deg": cfg.tilt_thresh_deg,
                "tilt_hysteresis_deg": cfg.tilt_hysteresis_deg,
                "d_grasp_mm": cfg.d_grasp_mm,
                "conf_min": cfg.conf_min,
                "roi_frac": cfg.roi_frac,
                "K_confirm": self.controller.config.K_confirm,
                "fov_h_deg": self.cfg.camera.fov_h_deg,
                "fov_v_deg": self.cfg.camera.fov_v_deg,
                "tof_cone_half_angle_deg": self.cfg.tof.cone_half_angle_deg,
                "max_detect_mm": self.cfg.camera.max_detect_mm,
                "d_attach_mm": self.scenario.d_attach_mm,
                "max_speed_mm_s": self.scenario.max_speed_mm_s,
            },
            "events": events,
        }


def _detection_json(d: Detection) -> dict:
    return {
        "class_id": d.class_id,
        "label": d.label,
        "confidence": d.confidence,
        "cx": d.cx,
        "cy": d.cy,
        "w": d.w,
        "h": d.h,
    }


def _jsonable(value):
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def run_session(
    cfg: SessionConfig,
    scenario: Scenario,
    steering_source: str = "scripted",
) -> SessionResult:
    """Run a complete scripted session; returns after duration_ms of sim time.

    Realtime mode paces each tick against the wall clock; fast mode runs as
    quickly as possible.  The trace is identical either way.
    """
    trace_fh = open(cfg.trace_path, "w", encoding="utf-8") if cfg.trace_path else None
    exit_reason = "completed"
    try:
        engine = SessionEngine(cfg, scenario, steering_source=steering_source, trace_fh=trace_fh)
        wall_start = time.monotonic()
        try:
            while not engine.ended:
                if cfg.mode == "realtime":
                    target = wall_start + engine.t_ms / 1000.0
                    delay = target - time.monotonic()
                    if delay > 0:
                        time.sleep(delay)
                engine.tick_once()
        except KeyboardInterrupt:
            engine.finish()
            exit_reason = "interrupted"
    finally:
        if trace_fh is not None:
            trace_fh.close()
    if cfg.trace_path:
        _write_latency_sidecar(cfg.trace_path + ".timing", engine.tick_latencies_ms)
    return SessionResult(
        trace_path=cfg.trace_path,
        ticks=engine.ticks,
        end_t_ms=engine.t_ms,
        commands=engine.command_count,
        tick_latencies_ms=engine.tick_latencies_ms,
        exit_reason=exit_reason,
    )


def _write_latency_sidecar(path: str, latencies: list[float]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for value in latencies:
            fh.write(f"{value:.6f}\n")
