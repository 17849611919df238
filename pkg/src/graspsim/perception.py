"""Sensor conditioning for the grasp controller.

Turns raw sensor samples into the three signals the state machine keys on:

- a median-filtered time-of-flight range and the distance gate derived from it,
- a tilt-gesture status (inactive / pending / active) with debounce and
  hysteresis, computed from accelerometer samples against a calibrated
  neutral gravity axis,
- a single grasp target picked from the frame's detections by confidence
  inside a central region of interest.

Everything here is a pure state transformer: callers own the state values
and thread them through explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

Vec3 = tuple[float, float, float]

# Below this magnitude an acceleration vector has no usable direction.
DEGENERATE_MAG_G = 1e-6


class DegenerateVector(ValueError):
    """Raised when a vector is too short to define a direction."""


class TofStatus(Enum):
    VALID = "valid"
    OUT_OF_RANGE = "out_of_range"


class GesturePhase(Enum):
    INACTIVE = "inactive"
    PENDING = "pending"
    ACTIVE = "active"


@dataclass(frozen=True)
class Detection:
    """One detected object in normalized image coordinates (bbox center + extents)."""

    class_id: int
    label: str
    confidence: float
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise ValueError("class_id must be >= 0")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValueError("bbox center must be in [0, 1]")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise ValueError("bbox extents must be in (0, 1]")

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h)


@dataclass(frozen=True)
class TofSample:
    """One range reading; range_mm is meaningful only when status is VALID."""

    t_ms: int
    status: TofStatus
    range_mm: int = 0

    @property
    def valid(self) -> bool:
        return self.status is TofStatus.VALID


@dataclass(frozen=True)
class AccelSample:
    """One accelerometer reading in units of g."""

    t_ms: int
    a: Vec3


@dataclass(frozen=True)
class PerceptionConfig:
    conf_min: float = 0.5
    roi_frac: float = 0.6
    tilt_thresh_deg: float = 60.0
    tilt_hysteresis_deg: float = 15.0
    t_hold_ms: int = 300
    accel_mag_band_g: tuple[float, float] = (0.5, 1.5)
    tof_window: int = 5
    d_grasp_mm: int = 100
    tof_min_mm: int = 10
    tof_max_mm: int = 200

    def __post_init__(self) -> None:
        if not 0.0 < self.conf_min < 1.0:
            raise ValueError("conf_min must be in (0, 1)")
        if not 0.0 < self.roi_frac <= 1.0:
            raise ValueError("roi_frac must be in (0, 1]")
        if not 0.0 < self.tilt_hysteresis_deg < self.tilt_thresh_deg < 180.0:
            raise ValueError("need 0 < hysteresis < threshold < 180")
        lo, hi = self.accel_mag_band_g
        if not lo < 1.0 < hi:
            raise ValueError("accel magnitude band must straddle 1 g")
        if self.tof_window < 1 or self.tof_window % 2 == 0:
            raise ValueError("tof_window must be odd and >= 1")
        if not self.tof_min_mm < self.d_grasp_mm <= self.tof_max_mm:
            raise ValueError("need tof_min_mm < d_grasp_mm <= tof_max_mm")


@dataclass(frozen=True)
class MedianFilterState:
    """Ring buffer of the last few valid ranges; oldest evicted first."""

    window_size: int = 5
    window: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if len(self.window) > self.window_size:
            raise ValueError("window larger than configured size")


@dataclass(frozen=True)
class GestureState:
    phase: GesturePhase = GesturePhase.INACTIVE
    onset_t_ms: Optional[int] = None
    ref_axis: Vec3 = (0.0, 0.0, 1.0)

    def __post_init__(self) -> None:
        if self.phase is GesturePhase.PENDING and self.onset_t_ms is None:
            raise ValueError("pending phase requires an onset timestamp")
        n = math.sqrt(sum(c * c for c in self.ref_axis))
        if abs(n - 1.0) > 1e-9:
            raise ValueError("ref_axis must be a unit vector")


def median_filter_push(
    state: MedianFilterState, sample: TofSample
) -> tuple[MedianFilterState, TofSample]:
    """Push one TOF sample; return the new state and the filtered sample.

    Valid samples enter the window and the output carries the median of the
    current contents (lower-middle element for an even count, so the result
    is always an actual reading).  Out-of-range samples pass through
    unchanged without touching the window.
    """
    if sample.status is not TofStatus.VALID:
        return state, sample
    window = (state.window + (sample.range_mm,))[-state.window_size :]
    ordered = sorted(window)
    median = ordered[(len(ordered) - 1) // 2]
    filtered = TofSample(t_ms=sample.t_ms, status=TofStatus.VALID, range_mm=median)
    return replace(state, window=window), filtered


def tilt_angle(a: Vec3, ref_axis: Vec3) -> float:
    """Angle in degrees between an acceleration vector and the neutral gravity axis.

    ref_axis must be unit length.  Raises DegenerateVector when the sample is
    too short to define a direction; callers treat such samples as rejected.
    """
    mag = math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
    if mag <= DEGENERATE_MAG_G:
        raise DegenerateVector(f"|a| = {mag:g} g is too small to orient")
    dot = a[0] * ref_axis[0] + a[1] * ref_axis[1] + a[2] * ref_axis[2]
    cosine = min(1.0, max(-1.0, dot / mag))
    return math.degrees(math.acos(cosine))


def gesture_step(
    g: GestureState, sample: AccelSample, cfg: PerceptionConfig
) -> tuple[GestureState, GesturePhase]:
    """Advance the tilt-gesture debounce by one accelerometer sample.

    Samples whose magnitude falls outside the configured band (or is
    degenerate) are rejected: a pending gesture is cancelled, an active one
    is kept.  Otherwise the tilt must stay at or above the threshold for
    t_hold_ms to go active, and must drop below threshold minus hysteresis
    to clear.
    """
    ax, ay, az = sample.a
    mag = math.sqrt(ax * ax + ay * ay + az * az)
    lo, hi = cfg.accel_mag_band_g
    if mag <= DEGENERATE_MAG_G or not lo <= mag <= hi:
        if g.phase is GesturePhase.ACTIVE:
            return g, GesturePhase.ACTIVE
        g2 = replace(g, phase=GesturePhase.INACTIVE, onset_t_ms=None)
        return g2, GesturePhase.INACTIVE

    tilt = tilt_angle(sample.a, g.ref_axis)

    phase = g.phase
    onset = g.onset_t_ms
    if phase is GesturePhase.INACTIVE:
        if tilt >= cfg.tilt_thresh_deg:
            phase, onset = GesturePhase.PENDING, sample.t_ms
    if phase is GesturePhase.PENDING:
        if tilt < cfg.tilt_thresh_deg:
            phase, onset = GesturePhase.INACTIVE, None
        elif onset is not None and sample.t_ms - onset >= cfg.t_hold_ms:
            phase = GesturePhase.ACTIVE
    elif phase is GesturePhase.ACTIVE:
        if tilt < cfg.tilt_thresh_deg - cfg.tilt_hysteresis_deg:
            phase, onset = GesturePhase.INACTIVE, None

    if phase is g.phase and onset == g.onset_t_ms:
        return g, phase
    g2 = replace(g, phase=phase, onset_t_ms=onset if phase is GesturePhase.PENDING else None)
    return g2, phase


def select_target(
    detections: Sequence[Detection], cfg: PerceptionConfig
) -> Optional[Detection]:
    """Pick the grasp target: highest confidence inside the central ROI.

    Ties break toward the bbox center closest to image center, then toward
    the smaller class id.  Returns None when no detection qualifies.
    """
    half = cfg.roi_frac / 2.0
    best: Optional[Detection] = None
    best_key: Optional[tuple[float, float, int]] = None
    for det in detections:
        if det.confidence < cfg.conf_min:
            continue
        if abs(det.cx - 0.5) > half or abs(det.cy - 0.5) > half:
            continue
        dist = math.hypot(det.cx - 0.5, det.cy - 0.5)
        key = (-det.confidence, dist, det.class_id)
        if best_key is None or key < best_key:
            best, best_key = det, key
    return best


def distance_gate(filtered: Optional[TofSample], cfg: PerceptionConfig) -> bool:
    """True iff the filtered range is valid and within grasping distance."""
    return (
        filtered is not None
        and filtered.status is TofStatus.VALID
        and filtered.range_mm <= cfg.d_grasp_mm
    )
