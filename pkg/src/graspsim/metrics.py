"""Session metrics computed as pure functions of a trace.

Grasp episodes are delimited by Close...Open command pairs.  Episode
validity is judged against the ground-truth world records interleaved at
frame rate: a Close is valid iff some object's surface was within grasping
distance at the moment the command was issued.  Release latency is measured
from the tilt-gesture activation edge (recomputed from the raw
accelerometer records under the recorded config) to the Open command.

Wall-clock tick latencies are not part of the trace (traces must be
byte-identical across runs); sessions write them to a sidecar file which
can be passed in separately.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

from .controller import Action
from .perception import (
    AccelSample,
    GesturePhase,
    GestureState,
    MedianFilterState,
    PerceptionConfig,
    TofSample,
    TofStatus,
    gesture_step,
    median_filter_push,
)
from .trace import EmptyTrace, TraceRecord


@dataclass(frozen=True)
class Episode:
    start_t_ms: int
    close_t_ms: int
    open_t_ms: Optional[int]
    time_to_grasp_ms: int
    grasp_valid: Optional[bool]
    release_latency_ms: Optional[int]


@dataclass
class Metrics:
    episodes: list[Episode] = field(default_factory=list)
    false_grasp_count: int = 0
    achieved_fps: float = 0.0
    tick_latency_p50_ms: Optional[float] = None
    tick_latency_p99_ms: Optional[float] = None

    def as_rows(self) -> list[tuple[str, str]]:
        rows = [
            ("episodes", str(len(self.episodes))),
            ("false_grasp_count", str(self.false_grasp_count)),
            ("achieved_fps", f"{self.achieved_fps:.3f}"),
        ]
        if self.tick_latency_p50_ms is not None:
            rows.append(("tick_latency_p50_ms", f"{self.tick_latency_p50_ms:.3f}"))
        if self.tick_latency_p99_ms is not None:
            rows.append(("tick_latency_p99_ms", f"{self.tick_latency_p99_ms:.3f}"))
        return rows


def percentile(values: list[float], q: float) -> float:
    """Nearest-rank percentile; q in (0, 100]."""
    if not values:
        raise ValueError("no values")
    ordered = sorted(values)
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return ordered[rank - 1]


def session_config(records: list[TraceRecord]) -> dict:
    if not records or records[0].kind != "meta" or "config" not in records[0].payload:
        raise EmptyTrace("trace lacks a leading meta record with config")
    return json.loads(records[0].payload["config"])


def perception_config_from(config: dict) -> PerceptionConfig:
    fields = dict(config["perception"])
    band = fields.get("accel_mag_band_g")
    if band is not None:
        fields["accel_mag_band_g"] = tuple(band)
    return PerceptionConfig(**fields)


def gesture_active_edges(records: list[TraceRecord], cfg: dict) -> list[int]:
    """Timestamps where the recomputed gesture status flips to active."""
    perception = perception_config_from(cfg)
    ref_axis = tuple(cfg.get("ref_axis", (0.0, 0.0, 1.0)))
    gesture = GestureState(ref_axis=ref_axis)
    status = GesturePhase.INACTIVE
    edges: list[int] = []
    for record in records:
        if record.kind != "accel":
            continue
        sample = AccelSample(
            t_ms=record.t_ms,
            a=(record.payload["ax"], record.payload["ay"], record.payload["az"]),
        )
        gesture, new_status = gesture_step(gesture, sample, perception)
        if new_status is GesturePhase.ACTIVE and status is not GesturePhase.ACTIVE:
            edges.append(record.t_ms)
        status = new_status
    return edges


def filtered_tof_series(records: list[TraceRecord], cfg: dict) -> list[tuple[int, Optional[int]]]:
    """(t_ms, filtered range or None) recomputed from the raw TOF records."""
    perception = perception_config_from(cfg)
    state = MedianFilterState(window_size=perception.tof_window)
    series: list[tuple[int, Optional[int]]] = []
    for record in records:
        if record.kind != "tof":
            continue
        status = TofStatus(record.payload["status"])
        sample = TofSample(record.t_ms, status, record.payload.get("range_mm", 0))
        state, filtered = median_filter_push(state, sample)
        series.append(
            (record.t_ms, filtered.range_mm if filtered.status is TofStatus.VALID else None)
        )
    return series


def nearest_object_surface_mm(world_payload: dict) -> Optional[float]:
    hand = (world_payload["hx"], world_payload["hy"], world_payload["hz"])
    best: Optional[float] = None
    for obj in world_payload["objects"]:
        d = math.dist(hand, (obj.x, obj.y, obj.z)) - obj.radius
        d = max(0.0, d)
        if best is None or d < best:
            best = d
    return best


def compute_metrics(
    records: list[TraceRecord], tick_latencies_ms: Optional[list[float]] = None
) -> Metrics:
    """Derive all session metrics from a decoded trace.

    Raises EmptyTrace when the trace has no meta record or no frame records.
    """
    if not records:
        raise EmptyTrace("no records")
    cfg = session_config(records)
    frames = [r for r in records if r.kind == "frame"]
    if not frames:
        raise EmptyTrace("trace has no frame records")

    d_grasp_mm = cfg["perception"]["d_grasp_mm"]
    worlds = {r.t_ms: r for r in records if r.kind == "world"}
    edges = gesture_active_edges(records, cfg)

    metrics = Metrics()

    span_ms = records[-1].t_ms - records[0].t_ms
    metrics.achieved_fps = len(frames) * 1000.0 / span_ms if span_ms > 0 else 0.0

    episode_start = records[0].t_ms
    close_t: Optional[int] = None
    for record in records:
        if record.kind != "cmd":
            continue
        if record.payload["action"] == Action.CLOSE.value:
            close_t = record.t_ms
        else:
            if close_t is None:
                continue
            metrics.episodes.append(
                _make_episode(episode_start, close_t, record.t_ms, worlds, d_grasp_mm, edges)
            )
            episode_start = record.t_ms
            close_t = None
    if close_t is not None:
        metrics.episodes.append(
            _make_episode(episode_start, close_t, None, worlds, d_grasp_mm, edges)
        )

    metrics.false_grasp_count = sum(1 for e in metrics.episodes if e.grasp_valid is False)

    if tick_latencies_ms:
        metrics.tick_latency_p50_ms = percentile(tick_latencies_ms, 50)
        metrics.tick_latency_p99_ms = percentile(tick_latencies_ms, 99)
    return metrics


def _make_episode(
    episode_start: int,
    close_t: int,
    open_t: Optional[int],
    worlds: dict[int, TraceRecord],
    d_grasp_mm: float,
    edges: list[int],
) -> Episode:
    grasp_valid: Optional[bool] = None
    world = worlds.get(close_t)
    if world is not None:
        nearest = nearest_object_surface_mm(world.payload)
        grasp_valid = nearest is not None and nearest <= d_grasp_mm
    release_latency: Optional[int] = None
    if open_t is not None:
        prior = [t for t in edges if t <= open_t]
        if prior:
            release_latency = open_t - prior[-1]
    return Episode(
        start_t_ms=episode_start,
        close_t_ms=close_t,
        open_t_ms=open_t,
        time_to_grasp_ms=close_t - episode_start,
        grasp_valid=grasp_valid,
        release_latency_ms=release_latency,
    )


def load_latency_sidecar(path: str) -> Optional[list[float]]:
    """Read per-tick wall latencies (one float per line, ms); None if absent."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return [float(line) for line in fh if line.strip()]
    except FileNotFoundError:
        return None
