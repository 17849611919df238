"""Deterministic virtual hand-and-objects world standing in for the hardware.

Geometry conventions (all invented plumbing, but fixed so every sensor and
oracle agrees):

- World frame: x/y/z in millimeters, gravity along -z.
- Hand body frame: x forward (camera and TOF boresight), y left, z up.
- Body-to-world rotation is Rz(yaw) @ Ry(pitch) @ Rx(roll), angles in
  degrees.  A level hand therefore reads (0, 0, +1) g on the accelerometer,
  and rolling the wrist is the release-gesture tilt.
- The camera and TOF sensor are co-located at the palm point (the hand
  position).

Objects are spheres; attachment couples an object rigidly to the hand and
removes it from all sensing.  All randomness is drawn from the single
world-owned generator in a fixed per-tick order (frame, TOF, accel), which
is what makes trace replay bit-exact.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional

from .controller import Action, ActuatorCommand
from .perception import AccelSample, Detection, TofSample, TofStatus, Vec3

Mat3 = tuple[Vec3, Vec3, Vec3]

DEFAULT_MAX_SPEED_MM_S = 500.0
DEFAULT_ATTACH_MM = 60.0


@dataclass(frozen=True)
class CameraModel:
    fov_h_deg: float = 84.0
    fov_v_deg: float = 87.0
    max_detect_mm: float = 600.0
    conf_base: float = 0.95
    conf_dist_coeff: float = 0.3
    conf_angle_coeff: float = 0.4
    conf_noise_sd: float = 0.02
    p_false_negative: float = 0.05
    frame_period_ms: float = 166.7

    def __post_init__(self) -> None:
        if not (0.0 < self.fov_h_deg < 180.0 and 0.0 < self.fov_v_deg < 180.0):
            raise ValueError("field of view must be in (0, 180) degrees per axis")
        if not 0.0 <= self.p_false_negative <= 1.0:
            raise ValueError("p_false_negative must be a probability")


@dataclass(frozen=True)
class TofModel:
    cone_half_angle_deg: float = 12.5
    noise_sd_mm: float = 3.0
    min_mm: int = 10
    max_mm: int = 200
    period_ms: float = 33.3

    def __post_init__(self) -> None:
        if not 0 < self.min_mm < self.max_mm:
            raise ValueError("need 0 < min_mm < max_mm")


@dataclass(frozen=True)
class AccelModel:
    noise_sd_g: float = 0.01
    period_ms: float = 10.0

    def __post_init__(self) -> None:
        if self.noise_sd_g < 0:
            raise ValueError("noise_sd_g must be >= 0")


@dataclass(frozen=True)
class Steering:
    """Human-in-the-loop input: arm velocity plus a wrist tilt target."""

    velocity: Vec3 = (0.0, 0.0, 0.0)
    tilt_target_deg: float = 0.0
    tilt_slew_deg_per_s: float = 120.0


@dataclass
class SimObject:
    id: str
    label: str
    class_id: int
    center: list[float]
    radius: float
    attached: bool = False

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError("object radius must be positive")


@dataclass
class WorldState:
    """Ground truth owned by the tick loop; never shared across threads."""

    t_ms: int = 0
    hand_pos: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    yaw_deg: float = 0.0
    pitch_deg: float = 0.0
    roll_deg: float = 0.0
    tilt_cmd_deg: float = 0.0
    objects: list[SimObject] = field(default_factory=list)
    hand_closed: bool = False
    rng: random.Random = field(default_factory=lambda: random.Random(0))

    def attached_object(self) -> Optional[SimObject]:
        for obj in self.objects:
            if obj.attached:
                return obj
        return None


def rotation_body_to_world(yaw_deg: float, pitch_deg: float, roll_deg: float) -> Mat3:
    """Rows of Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    cy, sy = math.cos(math.radians(yaw_deg)), math.sin(math.radians(yaw_deg))
    cp, sp = math.cos(math.radians(pitch_deg)), math.sin(math.radians(pitch_deg))
    cr, sr = math.cos(math.radians(roll_deg)), math.sin(math.radians(roll_deg))
    return (
        (cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr),
        (sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr),
        (-sp, cp * sr, cp * cr),
    )


def _world_to_body(r: Mat3, v: Vec3) -> Vec3:
    # R is orthonormal, so the inverse is the transpose.
    return (
        r[0][0] * v[0] + r[1][0] * v[1] + r[2][0] * v[2],
        r[0][1] * v[0] + r[1][1] * v[1] + r[2][1] * v[2],
        r[0][2] * v[0] + r[1][2] * v[1] + r[2][2] * v[2],
    )


def step_world(w: WorldState, steering: Steering, dt_ms: int) -> WorldState:
    """Advance the world by one time step (mutates and returns w).

    The hand translates by velocity * dt, the wrist roll slews toward the
    tilt target at the configured rate, and an attached object translates
    rigidly with the hand.
    """
    if dt_ms <= 0:
        raise ValueError("dt_ms must be positive")
    dt_s = dt_ms / 1000.0
    dx = steering.velocity[0] * dt_s
    dy = steering.velocity[1] * dt_s
    dz = steering.velocity[2] * dt_s
    w.hand_pos[0] += dx
    w.hand_pos[1] += dy
    w.hand_pos[2] += dz

    w.tilt_cmd_deg = steering.tilt_target_deg
    max_step = steering.tilt_slew_deg_per_s * dt_s
    delta = steering.tilt_target_deg - w.roll_deg
    if delta > max_step:
        delta = max_step
    elif delta < -max_step:
        delta = -max_step
    w.roll_deg += delta

    attached = w.attached_object()
    if attached is not None:
        attached.center[0] += dx
        attached.center[1] += dy
        attached.center[2] += dz

    w.t_ms += dt_ms
    return w


def project_detections(w: WorldState, cam: CameraModel, rng: random.Random) -> list[Detection]:
    """Synthesize the detector output from scene geometry.

    Unattached objects inside the view frustum and detection range yield one
    detection each, with a confidence that decays with distance and off-axis
    angle plus optional Gaussian noise, and an optional per-object false
    negative.  With noise and false negatives disabled this is a pure
    function of geometry.
    """
    r = rotation_body_to_world(w.yaw_deg, w.pitch_deg, w.roll_deg)
    detections: list[Detection] = []
    for obj in w.objects:
        if obj.attached:
            continue
        rel = (
            obj.center[0] - w.hand_pos[0],
            obj.center[1] - w.hand_pos[1],
            obj.center[2] - w.hand_pos[2],
        )
        bx, by, bz = _world_to_body(r, rel)
        if bx <= 0.0:
            continue
        dist = math.sqrt(bx * bx + by * by + bz * bz)
        if dist > cam.max_detect_mm or dist < 1e-9:
            continue
        phi_h = math.degrees(math.atan2(-by, bx))
        phi_v = math.degrees(math.atan2(-bz, math.hypot(bx, by)))
        if abs(phi_h) > cam.fov_h_deg / 2.0 or abs(phi_v) > cam.fov_v_deg / 2.0:
            continue
        if cam.p_false_negative > 0.0 and rng.random() < cam.p_false_negative:
            continue
        off_axis = max(
            abs(phi_h) / (cam.fov_h_deg / 2.0), abs(phi_v) / (cam.fov_v_deg / 2.0)
        )
        conf = (
            cam.conf_base
            - cam.conf_dist_coeff * dist / cam.max_detect_mm
            - cam.conf_angle_coeff * off_axis
        )
        if cam.conf_noise_sd > 0.0:
            conf += rng.gauss(0.0, cam.conf_noise_sd)
        conf = min(1.0, max(0.0, conf))
        half_angle = math.atan(obj.radius / dist)
        detections.append(
            Detection(
                class_id=obj.class_id,
                label=obj.label,
                confidence=conf,
                cx=0.5 + phi_h / cam.fov_h_deg,
                cy=0.5 + phi_v / cam.fov_v_deg,
                w=min(1.0, 2.0 * half_angle / math.radians(cam.fov_h_deg)),
                h=min(1.0, 2.0 * half_angle / math.radians(cam.fov_v_deg)),
            )
        )
    return detections


def surface_distance_mm(w: WorldState, obj: SimObject) -> float:
    """Distance from the palm point to the object's surface, floored at 0."""
    d = math.dist(w.hand_pos, obj.center)
    return max(0.0, d - obj.radius)


def simulate_tof(w: WorldState, tof: TofModel, rng: random.Random) -> TofSample:
    """Range to the nearest unattached object surface inside the sensor cone."""
    r = rotation_body_to_world(w.yaw_deg, w.pitch_deg, w.roll_deg)
    forward = (r[0][0], r[1][0], r[2][0])
    nearest: Optional[float] = None
    for obj in w.objects:
        if obj.attached:
            continue
        rel = (
            obj.center[0] - w.hand_pos[0],
            obj.center[1] - w.hand_pos[1],
            obj.center[2] - w.hand_pos[2],
        )
        dist = math.sqrt(rel[0] ** 2 + rel[1] ** 2 + rel[2] ** 2)
        if dist < 1e-9:
            surface = 0.0
        else:
            cos_angle = (
                rel[0] * forward[0] + rel[1] * forward[1] + rel[2] * forward[2]
            ) / dist
            angle = math.degrees(math.acos(min(1.0, max(-1.0, cos_angle))))
            if angle > tof.cone_half_angle_deg:
                continue
            surface = max(0.0, dist - obj.radius)
        if nearest is None or surface < nearest:
            nearest = surface
    if nearest is None or nearest > tof.max_mm:
        return TofSample(t_ms=w.t_ms, status=TofStatus.OUT_OF_RANGE)
    reading = nearest + (rng.gauss(0.0, tof.noise_sd_mm) if tof.noise_sd_mm > 0.0 else 0.0)
    clamped = min(tof.max_mm, max(tof.min_mm, round(reading)))
    return TofSample(t_ms=w.t_ms, status=TofStatus.VALID, range_mm=int(clamped))


def simulate_accel(w: WorldState, acc: AccelModel, rng: random.Random) -> AccelSample:
    """Gravity reaction rotated into the sensor frame, plus per-axis noise."""
    r = rotation_body_to_world(w.yaw_deg, w.pitch_deg, w.roll_deg)
    ax, ay, az = _world_to_body(r, (0.0, 0.0, 1.0))
    if acc.noise_sd_g > 0.0:
        ax += rng.gauss(0.0, acc.noise_sd_g)
        ay += rng.gauss(0.0, acc.noise_sd_g)
        az += rng.gauss(0.0, acc.noise_sd_g)
    return AccelSample(t_ms=w.t_ms, a=(ax, ay, az))


def apply_actuation(
    w: WorldState, cmd: ActuatorCommand, d_attach_mm: float = DEFAULT_ATTACH_MM
) -> WorldState:
    """Apply a Close/Open command to the world (mutates and returns w).

    Close latches the hand and attaches the nearest object whose surface is
    within reach, if any; Open releases the hand and detaches in place.
    """
    if cmd.action is Action.CLOSE:
        w.hand_closed = True
        if w.attached_object() is None:
            best: Optional[SimObject] = None
            best_key: Optional[tuple[float, str]] = None
            for obj in w.objects:
                surface = surface_distance_mm(w, obj)
                if surface <= d_attach_mm:
                    key = (surface, obj.id)
                    if best_key is None or key < best_key:
                        best, best_key = obj, key
            if best is not None:
                best.attached = True
    else:
        w.hand_closed = False
        attached = w.attached_object()
        if attached is not None:
            attached.attached = False
    return w
