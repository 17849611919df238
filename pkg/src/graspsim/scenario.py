"""Scenario files: the line-oriented description of a simulated session.

Grammar (one construct per line, '#' starts a comment, blank lines ignored):

    scenario  := line*
    line      := comment | blank | section | kv
    section   := '[' name ']'          name in {hand, object, steering, expect}
    kv        := key '=' value

Top-level keys (before any section): seed (required), duration_ms,
max_speed_mm_s, d_attach_mm.  Each `[object]` section opens a new object
(keys: id, label, class_id, center, radius); each `[steering]` section
appends a timeline entry (keys: t_ms, velocity, tilt_target_deg,
tilt_slew_deg_per_s); `[hand]` sets the initial pose (keys: position, yaw,
pitch, roll); `[expect]` collects free-form expectations for tests.
Vector values are three space-separated numbers.  Unknown sections or keys
are errors, never ignored.  The steering timeline must be sorted by t_ms.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from .simworld import (
    DEFAULT_ATTACH_MM,
    DEFAULT_MAX_SPEED_MM_S,
    SimObject,
    Steering,
    WorldState,
)


class ParseError(ValueError):
    """Syntax or vocabulary error in a scenario file, with a line number."""

    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ValidationError(ValueError):
    """A parsed scenario violates an invariant."""


@dataclass
class Scenario:
    seed: int
    duration_ms: int = 10_000
    max_speed_mm_s: float = DEFAULT_MAX_SPEED_MM_S
    d_attach_mm: float = DEFAULT_ATTACH_MM
    hand_pos: tuple[float, float, float] = (0.0, 0.0, 0.0)
    hand_yaw_deg: float = 0.0
    hand_pitch_deg: float = 0.0
    hand_roll_deg: float = 0.0
    objects: list[SimObject] = field(default_factory=list)
    timeline: list[tuple[int, Steering]] = field(default_factory=list)
    expect: dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        if self.duration_ms <= 0:
            raise ValidationError("duration_ms must be positive")
        for t, st in self.timeline:
            speed = sum(c * c for c in st.velocity) ** 0.5
            if speed > self.max_speed_mm_s + 1e-9:
                raise ValidationError(
                    f"steering at t={t} exceeds max speed "
                    f"({speed:.1f} > {self.max_speed_mm_s:.1f} mm/s)"
                )
        times = [t for t, _ in self.timeline]
        if times != sorted(times):
            raise ValidationError("steering timeline must be sorted by t_ms")
        seen_ids = set()
        for obj in self.objects:
            if obj.id in seen_ids:
                raise ValidationError(f"duplicate object id {obj.id!r}")
            seen_ids.add(obj.id)

    def build_world(self, seed: Optional[int] = None) -> WorldState:
        """Fresh world at t=0; seed overrides the scenario's own seed."""
        return WorldState(
            t_ms=0,
            hand_pos=list(self.hand_pos),
            yaw_deg=self.hand_yaw_deg,
            pitch_deg=self.hand_pitch_deg,
            roll_deg=self.hand_roll_deg,
            tilt_cmd_deg=self.hand_roll_deg,
            objects=[
                SimObject(o.id, o.label, o.class_id, list(o.center), o.radius)
                for o in self.objects
            ],
            rng=random.Random(self.seed if seed is None else seed),
        )

    def steering_at(self, t_ms: int) -> Steering:
        """Latest timeline entry at or before t_ms (piecewise constant)."""
        current = Steering()
        for entry_t, st in self.timeline:
            if entry_t > t_ms:
                break
            current = st
        return current


_TOP_KEYS = {"seed", "duration_ms", "max_speed_mm_s", "d_attach_mm"}
_SECTION_KEYS = {
    "hand": {"position", "yaw", "pitch", "roll"},
    "object": {"id", "label", "class_id", "center", "radius"},
    "steering": {"t_ms", "velocity", "tilt_target_deg", "tilt_slew_deg_per_s"},
    "expect": None,  # free-form
}


def _parse_number(line_no: int, key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ParseError(line_no, f"value for {key!r} is not a number: {raw!r}") from None


def _parse_int(line_no: int, key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ParseError(line_no, f"value for {key!r} is not an integer: {raw!r}") from None


def _parse_vec3(line_no: int, key: str, raw: str) -> tuple[float, float, float]:
    parts = raw.split()
    if len(parts) != 3:
        raise ParseError(line_no, f"value for {key!r} must be three numbers")
    x, y, z = (_parse_number(line_no, key, p) for p in parts)
    return (x, y, z)


def load_scenario(text: str) -> Scenario:
    """Parse and validate a scenario file.

    Raises ParseError (with the offending line number) for syntax problems
    and unknown vocabulary, ValidationError for invariant violations.
    """
    top: dict[str, tuple[int, str]] = {}
    hand: dict[str, tuple[int, str]] = {}
    objects: list[dict[str, tuple[int, str]]] = []
    steerings: list[dict[str, tuple[int, str]]] = []
    expect: dict[str, str] = {}
    section: Optional[str] = None

    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(line_no, f"malformed section header: {raw_line.strip()!r}")
            section = line[1:-1].strip()
            if section not in _SECTION_KEYS:
                raise ParseError(line_no, f"unknown section [{section}]")
            if section == "object":
                objects.append({})
            elif section == "steering":
                steerings.append({})
            continue
        if "=" not in line:
            raise ParseError(line_no, f"expected key = value, got {raw_line.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ParseError(line_no, "empty key")
        if section is None:
            if key not in _TOP_KEYS:
                raise ParseError(line_no, f"unknown key {key!r}")
            if key in top:
                raise ParseError(line_no, f"duplicate key {key!r}")
            top[key] = (line_no, value)
        elif section == "expect":
            expect[key] = value
        else:
            allowed = _SECTION_KEYS[section]
            if allowed is not None and key not in allowed:
                raise ParseError(line_no, f"unknown key {key!r} in [{section}]")
            bucket = {"hand": hand, "object": objects[-1] if objects else None,
                      "steering": steerings[-1] if steerings else None}[section]
            if bucket is None:  # pragma: no cover - sections create buckets above
                raise ParseError(line_no, f"key outside of a [{section}] section")
            if key in bucket:
                raise ParseError(line_no, f"duplicate key {key!r} in [{section}]")
            bucket[key] = (line_no, value)

    if "seed" not in top:
        raise ValidationError("scenario requires a top-level seed")

    scenario = Scenario(seed=_parse_int(top["seed"][0], "seed", top["seed"][1]))
    if "duration_ms" in top:
        scenario.duration_ms = _parse_int(top["duration_ms"][0], "duration_ms", top["duration_ms"][1])
    if "max_speed_mm_s" in top:
        scenario.max_speed_mm_s = _parse_number(
            top["max_speed_mm_s"][0], "max_speed_mm_s", top["max_speed_mm_s"][1]
        )
    if "d_attach_mm" in top:
        scenario.d_attach_mm = _parse_number(
            top["d_attach_mm"][0], "d_attach_mm", top["d_attach_mm"][1]
        )

    if "position" in hand:
        scenario.hand_pos = _parse_vec3(hand["position"][0], "position", hand["position"][1])
    if "yaw" in hand:
        scenario.hand_yaw_deg = _parse_number(hand["yaw"][0], "yaw", hand["yaw"][1])
    if "pitch" in hand:
        scenario.hand_pitch_deg = _parse_number(hand["pitch"][0], "pitch", hand["pitch"][1])
    if "roll" in hand:
        scenario.hand_roll_deg = _parse_number(hand["roll"][0], "roll", hand["roll"][1])

    def _field_num(fields: dict[str, tuple[int, str]], key: str, default: float) -> float:
        if key not in fields:
            return default
        line_no, raw = fields[key]
        return _parse_number(line_no, key, raw)

    for idx, fields in enumerate(objects):
        for required in ("id", "center", "radius"):
            if required not in fields:
                raise ValidationError(f"object #{idx + 1} is missing {required!r}")
        scenario.objects.append(
            SimObject(
                id=fields["id"][1],
                label=fields["label"][1] if "label" in fields else fields["id"][1],
                class_id=(
                    _parse_int(fields["class_id"][0], "class_id", fields["class_id"][1])
                    if "class_id" in fields
                    else 0
                ),
                center=list(_parse_vec3(fields["center"][0], "center", fields["center"][1])),
                radius=_parse_number(fields["radius"][0], "radius", fields["radius"][1]),
            )
        )

    for idx, fields in enumerate(steerings):
        if "t_ms" not in fields:
            raise ValidationError(f"steering entry #{idx + 1} is missing 't_ms'")
        t = _parse_int(fields["t_ms"][0], "t_ms", fields["t_ms"][1])
        velocity = (
            _parse_vec3(fields["velocity"][0], "velocity", fields["velocity"][1])
            if "velocity" in fields
            else (0.0, 0.0, 0.0)
        )
        steering = Steering(
            velocity=velocity,
            tilt_target_deg=_field_num(fields, "tilt_target_deg", 0.0),
            tilt_slew_deg_per_s=_field_num(fields, "tilt_slew_deg_per_s", 120.0),
        )
        scenario.timeline.append((t, steering))

    scenario.expect = expect
    scenario.validate()
    return scenario


def load_scenario_file(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())
