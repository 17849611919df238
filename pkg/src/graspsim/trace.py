"""Bit-exact session logging and deterministic replay.

Trace files are UTF-8 text, one record per line:

    <seq> <t_ms> <kind> key=value [key=value ...]

seq is strictly increasing, t_ms non-decreasing, and the first record is
always a `meta` record carrying the session seed plus the full simulation
config (compact JSON, percent-escaped) and its hash.  Numbers use the
shortest exact decimal form (`repr` of the float), so decode(encode(r))
reproduces every record bit for bit.  String values percent-escape the
characters that would break tokenization: space, '=', ',', '%', newline,
tab.

Record payloads by kind:

    frame  n=<int> d0=<class_id,label,conf,cx,cy,w,h> ...
    tof    status=valid range_mm=<int>   |   status=out_of_range
    accel  ax=<float> ay=<float> az=<float>
    state  from=<phase> to=<phase> reason=<reason>
    cmd    action=close|open
    world  hx= hy= hz= yaw= pitch= roll= closed=true|false
           n=<int> o0=<id,label,class_id,x,y,z,radius,0|1> ...
    meta   version=1 seed=<int> config_hash=<hex16> config=<json>
           (later meta records carry event=reset|set_param|end instead)

Replay reconstructs controller ticks from the sensor records and re-runs
the state machine under the recorded config; by determinism the produced
transitions and commands must match the state/cmd records exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace as dc_replace
from typing import Iterable, Iterator, Optional, TextIO

from .controller import (
    Action,
    ControllerConfig,
    GraspController,
    Phase,
    Reason,
    TickInput,
)
from .perception import AccelSample, Detection, PerceptionConfig, TofSample, TofStatus

TRACE_VERSION = 1
KINDS = ("frame", "tof", "accel", "state", "cmd", "world", "meta")

_PHASES = {p.value for p in Phase}
_REASONS = {r.value for r in Reason}
_ACTIONS = {a.value for a in Action}


class TraceError(ValueError):
    pass


class MalformedLine(TraceError):
    pass


class UnknownKind(TraceError):
    pass


class FieldTypeError(TraceError):
    pass


class OutOfOrder(TraceError):
    pass


class ConfigMismatch(TraceError):
    pass


class EmptyTrace(TraceError):
    pass


@dataclass(frozen=True)
class WorldObjSnapshot:
    """Ground-truth object state embedded in world records."""

    id: str
    label: str
    class_id: int
    x: float
    y: float
    z: float
    radius: float
    attached: bool


@dataclass(frozen=True)
class TraceRecord:
    seq: int
    t_ms: int
    kind: str
    payload: dict

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise UnknownKind(f"unknown record kind {self.kind!r}")


# ---------------------------------------------------------------------------
# value formatting


# '%' must be escaped first; the rest in any order.
_ESCAPES = ((" ", "%20"), ("=", "%3D"), (",", "%2C"), ("\n", "%0A"), ("\t", "%09"))


def _esc(s: str) -> str:
    out = s.replace("%", "%25")
    for ch, rep in _ESCAPES:
        out = out.replace(ch, rep)
    return out


def _unesc(s: str) -> str:
    out = []
    i = 0
    while i < len(s):
        if s[i] == "%":
            code = s[i + 1 : i + 3]
            if len(code) != 2:
                raise MalformedLine(f"truncated escape in {s!r}")
            try:
                out.append(chr(int(code, 16)))
            except ValueError:
                raise MalformedLine(f"bad escape %{code} in {s!r}") from None
            i += 3
        else:
            out.append(s[i])
            i += 1
    return "".join(out)


def _fmt_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        raise TraceError("trace numbers must be finite")
    return repr(float(x))


def _parse_float(key: str, raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise FieldTypeError(f"field {key!r}: not a number: {raw!r}") from None
    if math.isnan(value) or math.isinf(value):
        raise FieldTypeError(f"field {key!r}: not finite: {raw!r}")
    return value


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise FieldTypeError(f"field {key!r}: not an integer: {raw!r}") from None


def _fmt_bool(b: bool) -> str:
    return "true" if b else "false"


def _parse_bool(key: str, raw: str) -> bool:
    if raw == "true":
        return True
    if raw == "false":
        return False
    raise FieldTypeError(f"field {key!r}: expected true/false, got {raw!r}")


# ---------------------------------------------------------------------------
# per-kind payload codecs


def _encode_detection(d: Detection) -> str:
    return ",".join(
        (
            str(d.class_id),
            _esc(d.label),
            _fmt_float(d.confidence),
            _fmt_float(d.cx),
            _fmt_float(d.cy),
            _fmt_float(d.w),
            _fmt_float(d.h),
        )
    )


def _decode_detection(key: str, raw: str) -> Detection:
    parts = raw.split(",")
    if len(parts) != 7:
        raise FieldTypeError(f"field {key!r}: detection needs 7 comma fields, got {len(parts)}")
    return Detection(
        class_id=_parse_int(key, parts[0]),
        label=_unesc(parts[1]),
        confidence=_parse_float(key, parts[2]),
        cx=_parse_float(key, parts[3]),
        cy=_parse_float(key, parts[4]),
        w=_parse_float(key, parts[5]),
        h=_parse_float(key, parts[6]),
    )


def _encode_obj(o: WorldObjSnapshot) -> str:
    return ",".join(
        (
            _esc(o.id),
            _esc(o.label),
            str(o.class_id),
            _fmt_float(o.x),
            _fmt_float(o.y),
            _fmt_float(o.z),
            _fmt_float(o.radius),
            "1" if o.attached else "0",
        )
    )


def _decode_obj(key: str, raw: str) -> WorldObjSnapshot:
    parts = raw.split(",")
    if len(parts) != 8:
        raise FieldTypeError(f"field {key!r}: object needs 8 comma fields, got {len(parts)}")
    if parts[7] not in ("0", "1"):
        raise FieldTypeError(f"field {key!r}: attached flag must be 0 or 1")
    return WorldObjSnapshot(
        id=_unesc(parts[0]),
        label=_unesc(parts[1]),
        class_id=_parse_int(key, parts[2]),
        x=_parse_float(key, parts[3]),
        y=_parse_float(key, parts[4]),
        z=_parse_float(key, parts[5]),
        radius=_parse_float(key, parts[6]),
        attached=parts[7] == "1",
    )


def _encode_payload(kind: str, p: dict) -> list[str]:
    if kind == "frame":
        dets = p["detections"]
        return [f"n={len(dets)}"] + [f"d{i}={_encode_detection(d)}" for i, d in enumerate(dets)]
    if kind == "tof":
        if p["status"] == TofStatus.VALID.value:
            return [f"status={p['status']}", f"range_mm={p['range_mm']}"]
        return [f"status={p['status']}"]
    if kind == "accel":
        return [f"a{ax}={_fmt_float(p['a' + ax])}" for ax in ("x", "y", "z")]
    if kind == "state":
        return [f"from={p['from']}", f"to={p['to']}", f"reason={p['reason']}"]
    if kind == "cmd":
        return [f"action={p['action']}"]
    if kind == "world":
        objs = p["objects"]
        out = [
            f"hx={_fmt_float(p['hx'])}",
            f"hy={_fmt_float(p['hy'])}",
            f"hz={_fmt_float(p['hz'])}",
            f"yaw={_fmt_float(p['yaw'])}",
            f"pitch={_fmt_float(p['pitch'])}",
            f"roll={_fmt_float(p['roll'])}",
            f"closed={_fmt_bool(p['closed'])}",
            f"n={len(objs)}",
        ]
        return out + [f"o{i}={_encode_obj(o)}" for i, o in enumerate(objs)]
    # meta: ordered free-form scalars; ints, floats and strings only
    out = []
    for key, value in p.items():
        if isinstance(value, bool):
            out.append(f"{key}={_fmt_bool(value)}")
        elif isinstance(value, int):
            out.append(f"{key}={value}")
        elif isinstance(value, float):
            out.append(f"{key}={_fmt_float(value)}")
        elif isinstance(value, str):
            out.append(f"{key}={_esc(value)}")
        else:
            raise TraceError(f"meta field {key!r} has unsupported type {type(value).__name__}")
    return out


_META_INT_KEYS = {"version", "seed", "ticks", "frames"}
_META_FLOAT_KEYS = {"value"}


def _decode_payload(kind: str, tokens: list[str]) -> dict:
    pairs: list[tuple[str, str]] = []
    seen: set[str] = set()
    for tok in tokens:
        if "=" not in tok:
            raise MalformedLine(f"token {tok!r} is not key=value")
        key, _, raw = tok.partition("=")
        if not key:
            raise MalformedLine(f"token {tok!r} has an empty key")
        if key in seen:
            raise MalformedLine(f"duplicate field {key!r}")
        seen.add(key)
        pairs.append((key, raw))
    fields = dict(pairs)

    def require(key: str) -> str:
        if key not in fields:
            raise FieldTypeError(f"missing required field {key!r} for kind {kind!r}")
        return fields.pop(key)

    def reject_extras() -> None:
        if fields:
            stray = next(iter(fields))
            raise FieldTypeError(f"unknown field {stray!r} for kind {kind!r}")

    if kind == "frame":
        n = _parse_int("n", require("n"))
        dets = tuple(_decode_detection(f"d{i}", require(f"d{i}")) for i in range(n))
        reject_extras()
        return {"detections": dets}
    if kind == "tof":
        status = require("status")
        if status not in (TofStatus.VALID.value, TofStatus.OUT_OF_RANGE.value):
            raise FieldTypeError(f"field 'status': unknown value {status!r}")
        if status == TofStatus.VALID.value:
            payload = {"status": status, "range_mm": _parse_int("range_mm", require("range_mm"))}
        else:
            payload = {"status": status}
        reject_extras()
        return payload
    if kind == "accel":
        payload = {f"a{ax}": _parse_float(f"a{ax}", require(f"a{ax}")) for ax in ("x", "y", "z")}
        reject_extras()
        return payload
    if kind == "state":
        frm, to, reason = require("from"), require("to"), require("reason")
        if frm not in _PHASES or to not in _PHASES:
            raise FieldTypeError(f"field 'from'/'to': unknown phase {frm!r}/{to!r}")
        if reason not in _REASONS:
            raise FieldTypeError(f"field 'reason': unknown value {reason!r}")
        reject_extras()
        return {"from": frm, "to": to, "reason": reason}
    if kind == "cmd":
        action = require("action")
        if action not in _ACTIONS:
            raise FieldTypeError(f"field 'action': unknown value {action!r}")
        reject_extras()
        return {"action": action}
    if kind == "world":
        payload: dict = {}
        for key in ("hx", "hy", "hz", "yaw", "pitch", "roll"):
            payload[key] = _parse_float(key, require(key))
        payload["closed"] = _parse_bool("closed", require("closed"))
        n = _parse_int("n", require("n"))
        payload["objects"] = tuple(_decode_obj(f"o{i}", require(f"o{i}")) for i in range(n))
        reject_extras()
        return payload
    # meta: free-form, typed by key
    payload = {}
    for key, raw in pairs:
        if key in _META_INT_KEYS:
            payload[key] = _parse_int(key, raw)
        elif key in _META_FLOAT_KEYS:
            payload[key] = _parse_float(key, raw)
        else:
            payload[key] = _unesc(raw)
    return payload


def encode_record(r: TraceRecord) -> str:
    """One record as one line (no trailing newline)."""
    head = f"{r.seq} {r.t_ms} {r.kind}"
    tokens = _encode_payload(r.kind, r.payload)
    return head + (" " + " ".join(tokens) if tokens else "")


def decode_record(line: str) -> TraceRecord:
    """Parse one line; raises MalformedLine / UnknownKind / FieldTypeError."""
    stripped = line.rstrip("\n")
    if not stripped.strip():
        raise MalformedLine("empty line")
    tokens = stripped.split(" ")
    if len(tokens) < 3:
        raise MalformedLine(f"need at least 'seq t_ms kind', got {len(tokens)} tokens")
    try:
        seq = int(tokens[0])
    except ValueError:
        raise MalformedLine(f"token 1: seq is not an integer: {tokens[0]!r}") from None
    try:
        t_ms = int(tokens[1])
    except ValueError:
        raise MalformedLine(f"token 2: t_ms is not an integer: {tokens[1]!r}") from None
    kind = tokens[2]
    if kind not in KINDS:
        raise UnknownKind(f"token 3: unknown record kind {kind!r}")
    payload = _decode_payload(kind, tokens[3:])
    return TraceRecord(seq=seq, t_ms=t_ms, kind=kind, payload=payload)


# ---------------------------------------------------------------------------
# reading and writing streams


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


class TraceWriter:
    """Sequencing writer; call meta() first, then log records in tick order."""

    def __init__(self, fh: TextIO) -> None:
        self._fh = fh
        self._seq = 0
        self._last_t: Optional[int] = None

    def write(self, t_ms: int, kind: str, payload: dict) -> TraceRecord:
        if self._seq == 0 and kind != "meta":
            raise TraceError("first record must be meta")
        if self._last_t is not None and t_ms < self._last_t:
            raise OutOfOrder(f"t_ms went backwards: {t_ms} < {self._last_t}")
        record = TraceRecord(seq=self._seq, t_ms=t_ms, kind=kind, payload=payload)
        self._fh.write(encode_record(record) + "\n")
        self._seq += 1
        self._last_t = t_ms
        return record

    def meta(self, t_ms: int, seed: int, config: dict) -> TraceRecord:
        return self.write(
            t_ms,
            "meta",
            {
                "version": TRACE_VERSION,
                "seed": seed,
                "config_hash": config_hash(config),
                "config": json.dumps(config, sort_keys=True, separators=(",", ":")),
            },
        )


def read_records(lines: Iterable[str]) -> Iterator[TraceRecord]:
    """Decode a line stream, enforcing seq/t ordering (raises OutOfOrder)."""
    last_seq: Optional[int] = None
    last_t: Optional[int] = None
    for line in lines:
        if not line.strip():
            continue
        record = decode_record(line)
        if last_seq is not None and record.seq <= last_seq:
            raise OutOfOrder(f"seq {record.seq} after {last_seq}")
        if last_t is not None and record.t_ms < last_t:
            raise OutOfOrder(f"t_ms {record.t_ms} after {last_t} (seq {record.seq})")
        last_seq, last_t = record.seq, record.t_ms
        yield record


def load_trace(path: str) -> list[TraceRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        return list(read_records(fh))


# ---------------------------------------------------------------------------
# replay


@dataclass(frozen=True)
class Divergence:
    seq: int
    expected: str
    actual: str


@dataclass
class ReplayResult:
    transitions: list[TraceRecord] = field(default_factory=list)
    commands: list[TraceRecord] = field(default_factory=list)
    divergences: list[Divergence] = field(default_factory=list)
    ticks: int = 0

    @property
    def ok(self) -> bool:
        return not self.divergences


def controller_from_config(config: dict) -> GraspController:
    perception = dict(config["perception"])
    band = perception.get("accel_mag_band_g")
    if band is not None:
        perception["accel_mag_band_g"] = tuple(band)
    ref_axis = tuple(config.get("ref_axis", (0.0, 0.0, 1.0)))
    return GraspController(
        perception=PerceptionConfig(**perception),
        config=ControllerConfig(**config["controller"]),
        ref_axis=ref_axis,
    )


def replay(records: list[TraceRecord], config: Optional[dict] = None) -> ReplayResult:
    """Re-run the controller over a trace's sensor records and diff the outcome.

    Uses the config embedded in the leading meta record; a caller-provided
    config must hash to the recorded config_hash (ConfigMismatch otherwise).
    Returns the first divergence found, if any, at the seq of the logged
    record that failed to match.
    """
    if not records:
        raise EmptyTrace("no records")
    meta = records[0]
    if meta.kind != "meta" or "config" not in meta.payload:
        raise TraceError("trace must start with a meta record carrying the config")
    embedded = json.loads(meta.payload["config"])
    if config_hash(embedded) != meta.payload.get("config_hash"):
        raise ConfigMismatch("embedded config does not match its recorded hash")
    if config is not None and config_hash(config) != meta.payload.get("config_hash"):
        raise ConfigMismatch("provided config does not match the trace's config_hash")
    cfg = embedded if config is None else config

    controller = controller_from_config(cfg)
    result = ReplayResult()

    # Logged control records, in order; replay output is matched against them.
    expected = [r for r in records if r.kind in ("state", "cmd")]
    cursor = 0

    def produce(kind: str, t_ms: int, payload: dict) -> bool:
        nonlocal cursor
        actual_desc = f"{kind}@{t_ms} {payload}"
        if cursor >= len(expected):
            seq = records[-1].seq + 1
            result.divergences.append(
                Divergence(seq=seq, expected="(end of trace)", actual=actual_desc)
            )
            return False
        want = expected[cursor]
        if want.kind != kind or want.t_ms != t_ms or want.payload != payload:
            result.divergences.append(
                Divergence(
                    seq=want.seq,
                    expected=f"{want.kind}@{want.t_ms} {want.payload}",
                    actual=actual_desc,
                )
            )
            return False
        cursor += 1
        return True

    def run_tick(tick: TickInput, param_changes: list[tuple[str, object]]) -> bool:
        for key, value in param_changes:
            apply_param(controller, key, value)
        out = controller.tick(tick)
        result.ticks += 1
        for tr in out.transitions:
            payload = {
                "from": tr.from_phase.value,
                "to": tr.to_phase.value,
                "reason": tr.reason.value,
            }
            result.transitions.append(
                TraceRecord(seq=-1, t_ms=tick.t_ms, kind="state", payload=payload)
            )
            if not produce("state", tick.t_ms, payload):
                return False
        for cmd in out.commands:
            payload = {"action": cmd.action.value}
            result.commands.append(
                TraceRecord(seq=-1, t_ms=cmd.t_ms, kind="cmd", payload=payload)
            )
            if not produce("cmd", cmd.t_ms, payload):
                return False
        return True

    pending_t: Optional[int] = None
    pending_frame: Optional[list[Detection]] = None
    pending_tof: Optional[TofSample] = None
    pending_accel: Optional[AccelSample] = None
    pending_reset = False
    pending_params: list[tuple[str, object]] = []

    def flush() -> bool:
        nonlocal pending_t, pending_frame, pending_tof, pending_accel
        nonlocal pending_reset, pending_params
        if pending_t is None:
            return True
        tick = TickInput(
            t_ms=pending_t,
            frame=pending_frame,
            tof=pending_tof,
            accel=pending_accel,
            reset=pending_reset,
        )
        ok = run_tick(tick, pending_params)
        pending_t = None
        pending_frame = pending_tof = pending_accel = None
        pending_reset = False
        pending_params = []
        return ok

    for record in records[1:]:
        if record.kind in ("state", "cmd", "world"):
            continue
        if record.kind == "meta":
            event = record.payload.get("event")
            if event == "reset":
                if pending_t is not None and pending_t != record.t_ms and not flush():
                    return result
                pending_t = record.t_ms
                pending_reset = True
            elif event == "set_param":
                if pending_t is not None and pending_t != record.t_ms and not flush():
                    return result
                pending_t = record.t_ms
                pending_params.append((record.payload["key"], record.payload["value"]))
            continue
        if pending_t is not None and record.t_ms != pending_t and not flush():
            return result
        pending_t = record.t_ms
        if record.kind == "frame":
            pending_frame = list(record.payload["detections"])
        elif record.kind == "tof":
            status = TofStatus(record.payload["status"])
            pending_tof = TofSample(
                t_ms=record.t_ms,
                status=status,
                range_mm=record.payload.get("range_mm", 0),
            )
        elif record.kind == "accel":
            p = record.payload
            pending_accel = AccelSample(t_ms=record.t_ms, a=(p["ax"], p["ay"], p["az"]))
    if not flush():
        return result

    if cursor < len(expected):
        want = expected[cursor]
        result.divergences.append(
            Divergence(
                seq=want.seq,
                expected=f"{want.kind}@{want.t_ms} {want.payload}",
                actual="(replay produced nothing further)",
            )
        )
    return result


# Live-tunable parameters: thresholds only, never rates or dwell times.
LIVE_TUNABLE = {
    "conf_min": ("perception", float),
    "roi_frac": ("perception", float),
    "tilt_thresh_deg": ("perception", float),
    "tilt_hysteresis_deg": ("perception", float),
    "t_hold_ms": ("perception", int),
    "d_grasp_mm": ("perception", int),
    "K_confirm": ("controller", int),
}


def apply_param(controller: GraspController, key: str, value: object) -> None:
    """Apply a live-tunable parameter change to a running controller."""
    if key not in LIVE_TUNABLE:
        raise KeyError(f"parameter {key!r} is not live-tunable")
    group, typ = LIVE_TUNABLE[key]
    coerced = typ(value)  # type: ignore[call-arg]
    if group == "perception":
        controller.perception = dc_replace(controller.perception, **{key: coerced})
    else:
        controller.config = dc_replace(controller.config, **{key: coerced})
