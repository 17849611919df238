"""Grasp/release state machine and the fixed-tick control loop around it.

The controller consumes one TickInput at a time (any mix of camera frame,
TOF range, and accelerometer sample, with non-decreasing timestamps),
distills it into control events, folds those through a five-phase state
machine, and emits guarded actuator commands:

    Scanning --K qualifying frames--> Closing --dwell--> Holding
    Holding --tilt gesture--> Opening --dwell + gesture cleared + refractory--> Scanning
    any --stale sensors--> Fault (absorbing until reset)

A qualifying frame means a target was selected in the ROI *and* the
median-filtered TOF range is within grasping distance.  The actuator guard
is a software interlock: commands must alternate Close/Open and keep a
minimum spacing; a violation latches Fault and drops the command, since it
can only mean a controller bug.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

from .perception import (
    AccelSample,
    DegenerateVector,
    Detection,
    GesturePhase,
    GestureState,
    MedianFilterState,
    PerceptionConfig,
    TofSample,
    Vec3,
    distance_gate,
    gesture_step,
    median_filter_push,
    select_target,
    tilt_angle,
)


class Phase(Enum):
    SCANNING = "scanning"
    CLOSING = "closing"
    HOLDING = "holding"
    OPENING = "opening"
    FAULT = "fault"


class ControlEvent(Enum):
    QUALIFYING_FRAME = "qualifying_frame"
    NON_QUALIFYING_FRAME = "non_qualifying_frame"
    GESTURE_ACTIVE = "gesture_active"
    GESTURE_CLEARED = "gesture_cleared"
    DWELL_ELAPSED = "dwell_elapsed"
    STALE = "stale"
    RESET = "reset"


class Action(Enum):
    CLOSE = "close"
    OPEN = "open"


class Reason(Enum):
    GRASP = "grasp"
    DWELL = "dwell"
    RELEASE = "release"
    REARM = "rearm"
    STALE = "stale"
    RESET = "reset"
    INTERLOCK = "interlock"


class GuardResult(Enum):
    ACCEPT = "accept"
    VIOLATION = "violation"


@dataclass(frozen=True)
class ActuatorCommand:
    t_ms: int
    action: Action


@dataclass(frozen=True)
class ControllerConfig:
    K_confirm: int = 3
    t_close_ms: int = 800
    t_open_ms: int = 800
    t_refractory_ms: int = 1000
    t_min_cycle_ms: int = 500
    stale_factor: float = 3.0
    frame_period_ms: float = 166.7
    accel_period_ms: float = 10.0
    tof_period_ms: float = 33.3
    fault_policy: str = "hold_position"

    def __post_init__(self) -> None:
        if self.K_confirm < 1:
            raise ValueError("K_confirm must be >= 1")
        for name in ("frame_period_ms", "accel_period_ms", "tof_period_ms"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.t_close_ms < self.t_min_cycle_ms or self.t_open_ms < self.t_min_cycle_ms:
            raise ValueError("dwell times must not undercut t_min_cycle_ms")
        if self.fault_policy != "hold_position":
            raise ValueError("only the hold_position fault policy is defined")


# Sentinel "long before session start" for the last-command timestamp.
_NEVER = -(10**12)


@dataclass(frozen=True)
class FsmState:
    phase: Phase = Phase.SCANNING
    confirm_count: int = 0
    phase_entered_t_ms: int = 0
    rearm_ok: bool = True
    # Whether the last emitted actuator command left the hand closed, and
    # when it was emitted.  The reset rule needs the former to route to
    # Holding instead of dropping a grip; command emission checks the latter
    # so min-cycle spacing holds by construction even across resets.
    hand_closed: bool = False
    last_cmd_t_ms: int = _NEVER


@dataclass(frozen=True)
class TickInput:
    t_ms: int
    frame: Optional[list[Detection]] = None
    tof: Optional[TofSample] = None
    accel: Optional[AccelSample] = None
    reset: bool = False

    def __post_init__(self) -> None:
        if self.frame is None and self.tof is None and self.accel is None and not self.reset:
            raise ValueError("a tick must carry at least one input")


@dataclass(frozen=True)
class Transition:
    from_phase: Phase
    to_phase: Phase
    reason: Reason


@dataclass(frozen=True)
class Telemetry:
    filtered_tof: Optional[TofSample]
    tilt_deg: Optional[float]
    gesture_status: GesturePhase
    selected_target: Optional[Detection]


@dataclass(frozen=True)
class TickOutput:
    state_after: FsmState
    commands: tuple[ActuatorCommand, ...]
    transitions: tuple[Transition, ...]
    telemetry: Telemetry


def fsm_step(
    s: FsmState, ev: ControlEvent, t_ms: int, cfg: ControllerConfig
) -> tuple[FsmState, list[ActuatorCommand]]:
    """Apply one control event; total over all (phase, event) pairs.

    Undefined combinations are no-ops.  Spurious DWELL_ELAPSED events are
    revalidated against the phase entry time, so feeding events at
    adversarial times cannot shortcut a dwell.  Command emission also
    requires t_min_cycle_ms since the previous command; a trigger inside
    that window (reachable only through reset races) is dropped without a
    transition rather than handed to the interlock.
    """
    phase = s.phase

    if ev is ControlEvent.RESET:
        # Recover without ever dropping a held object: a closed hand goes
        # back to Holding, an open one to a fresh Scanning.
        if s.hand_closed:
            if phase is Phase.HOLDING:
                return s, []
            return FsmState(Phase.HOLDING, 0, t_ms, s.rearm_ok, True, s.last_cmd_t_ms), []
        if phase is Phase.SCANNING and s.confirm_count == 0:
            return s, []
        return FsmState(Phase.SCANNING, 0, t_ms, True, False, s.last_cmd_t_ms), []

    if phase is Phase.FAULT:
        return s, []

    if ev is ControlEvent.STALE:
        return FsmState(Phase.FAULT, 0, t_ms, s.rearm_ok, s.hand_closed, s.last_cmd_t_ms), []

    if phase is Phase.SCANNING:
        if ev is ControlEvent.QUALIFYING_FRAME:
            count = s.confirm_count + 1
            if count >= cfg.K_confirm:
                if t_ms - s.last_cmd_t_ms < cfg.t_min_cycle_ms:
                    return s, []
                cmd = ActuatorCommand(t_ms, Action.CLOSE)
                return FsmState(Phase.CLOSING, 0, t_ms, s.rearm_ok, True, t_ms), [cmd]
            return replace(s, confirm_count=count), []
        if ev is ControlEvent.NON_QUALIFYING_FRAME:
            if s.confirm_count == 0:
                return s, []
            return replace(s, confirm_count=0), []
        if ev is ControlEvent.GESTURE_CLEARED:
            return s if s.rearm_ok else replace(s, rearm_ok=True), []
        return s, []

    if phase is Phase.CLOSING:
        # Gesture events are deliberately ignored mid-actuation.
        if ev is ControlEvent.DWELL_ELAPSED:
            if t_ms - s.phase_entered_t_ms >= cfg.t_close_ms:
                return FsmState(Phase.HOLDING, 0, t_ms, s.rearm_ok, True, s.last_cmd_t_ms), []
        return s, []

    if phase is Phase.HOLDING:
        if ev is ControlEvent.GESTURE_ACTIVE:
            if t_ms - s.last_cmd_t_ms < cfg.t_min_cycle_ms:
                return s, []
            cmd = ActuatorCommand(t_ms, Action.OPEN)
            return FsmState(Phase.OPENING, 0, t_ms, False, False, t_ms), [cmd]
        if ev is ControlEvent.GESTURE_CLEARED:
            return s if s.rearm_ok else replace(s, rearm_ok=True), []
        return s, []

    # Phase.OPENING: wait out the dwell, then re-arm once the gesture has
    # cleared and the refractory period has passed.
    if ev is ControlEvent.GESTURE_CLEARED:
        s = replace(s, rearm_ok=True)
        ev = ControlEvent.DWELL_ELAPSED
    if ev is ControlEvent.DWELL_ELAPSED:
        elapsed = t_ms - s.phase_entered_t_ms
        if s.rearm_ok and elapsed >= cfg.t_open_ms and elapsed >= cfg.t_refractory_ms:
            return FsmState(Phase.SCANNING, 0, t_ms, True, False, s.last_cmd_t_ms), []
    return s, []


def transition_reason(
    from_phase: Phase, ev: ControlEvent, to_phase: Phase
) -> Reason:
    """Name the cause of a phase change produced by fsm_step."""
    if ev is ControlEvent.RESET:
        return Reason.RESET
    if ev is ControlEvent.STALE:
        return Reason.STALE
    if to_phase is Phase.CLOSING:
        return Reason.GRASP
    if to_phase is Phase.OPENING:
        return Reason.RELEASE
    if from_phase is Phase.CLOSING and to_phase is Phase.HOLDING:
        return Reason.DWELL
    if from_phase is Phase.OPENING and to_phase is Phase.SCANNING:
        return Reason.REARM
    raise ValueError(f"no transition {from_phase} -> {to_phase} on {ev}")


def staleness_check(
    last_seen: dict[str, int], t_ms: int, cfg: ControllerConfig
) -> bool:
    """True when any sensor's age strictly exceeds stale_factor x its period."""
    limits = {
        "frame": cfg.stale_factor * cfg.frame_period_ms,
        "tof": cfg.stale_factor * cfg.tof_period_ms,
        "accel": cfg.stale_factor * cfg.accel_period_ms,
    }
    for sensor, limit in limits.items():
        if t_ms - last_seen[sensor] > limit:
            return True
    return False


def actuator_guard(
    last: Optional[ActuatorCommand], cmd: ActuatorCommand, cfg: ControllerConfig
) -> GuardResult:
    """Interlock: commands must alternate and keep t_min_cycle_ms spacing."""
    if last is not None:
        if cmd.action is last.action:
            return GuardResult.VIOLATION
        if cmd.t_ms - last.t_ms < cfg.t_min_cycle_ms:
            return GuardResult.VIOLATION
    return GuardResult.ACCEPT


# Dwell duration per phase, as a ControllerConfig attribute name.
_DWELL_ATTR = {Phase.CLOSING: "t_close_ms", Phase.OPENING: "t_open_ms"}


class GraspController:
    """Single-owner tick loop state: perception filters plus the FSM.

    Exactly one tick executes at a time, in timestamp order; the enclosing
    process is responsible for serializing sensor inputs into ticks.
    """

    def __init__(
        self,
        perception: Optional[PerceptionConfig] = None,
        config: Optional[ControllerConfig] = None,
        ref_axis: Vec3 = (0.0, 0.0, 1.0),
        t0_ms: int = 0,
    ) -> None:
        self.perception = perception or PerceptionConfig()
        self.config = config or ControllerConfig()
        self.fsm = FsmState(phase_entered_t_ms=t0_ms)
        self.median = MedianFilterState(window_size=self.perception.tof_window)
        self.gesture = GestureState(ref_axis=ref_axis)
        self.gesture_status = GesturePhase.INACTIVE
        self.filtered_tof: Optional[TofSample] = None
        self.tilt_deg: Optional[float] = None
        self.selected_target: Optional[Detection] = None
        self.last_cmd: Optional[ActuatorCommand] = None
        self.last_seen: Optional[dict[str, int]] = None
        self.last_t_ms: Optional[int] = None

    def assemble_event(
        self, tick: TickInput
    ) -> tuple[list[ControlEvent], Telemetry]:
        """Update perception state from one tick and list the control events.

        Event order is fixed: Reset, Stale, DwellElapsed, gesture edges,
        frame events.  Safety-relevant events always run first so nothing
        downstream can mask them.
        """
        t = tick.t_ms
        if self.last_seen is None:
            self.last_seen = {"frame": t, "tof": t, "accel": t}

        events: list[ControlEvent] = []
        if tick.reset:
            events.append(ControlEvent.RESET)

        if tick.frame is not None:
            self.last_seen["frame"] = t
        if tick.tof is not None:
            self.last_seen["tof"] = t
            self.median, self.filtered_tof = median_filter_push(self.median, tick.tof)
        if staleness_check(self.last_seen, t, self.config):
            events.append(ControlEvent.STALE)

        dwell_attr = _DWELL_ATTR.get(self.fsm.phase)
        if dwell_attr is not None:
            if t - self.fsm.phase_entered_t_ms >= getattr(self.config, dwell_attr):
                events.append(ControlEvent.DWELL_ELAPSED)

        if tick.accel is not None:
            self.last_seen["accel"] = t
            prev = self.gesture_status
            self.gesture, self.gesture_status = gesture_step(
                self.gesture, tick.accel, self.perception
            )
            try:
                self.tilt_deg = tilt_angle(tick.accel.a, self.gesture.ref_axis)
            except DegenerateVector:
                pass
            if self.gesture_status is GesturePhase.ACTIVE and prev is not GesturePhase.ACTIVE:
                events.append(ControlEvent.GESTURE_ACTIVE)
            elif prev is GesturePhase.ACTIVE and self.gesture_status is not GesturePhase.ACTIVE:
                events.append(ControlEvent.GESTURE_CLEARED)

        if tick.frame is not None:
            self.selected_target = select_target(tick.frame, self.perception)
            if self.selected_target is not None and distance_gate(
                self.filtered_tof, self.perception
            ):
                events.append(ControlEvent.QUALIFYING_FRAME)
            else:
                events.append(ControlEvent.NON_QUALIFYING_FRAME)

        telemetry = Telemetry(
            filtered_tof=self.filtered_tof,
            tilt_deg=self.tilt_deg,
            gesture_status=self.gesture_status,
            selected_target=self.selected_target,
        )
        return events, telemetry

    def tick(self, tick: TickInput) -> TickOutput:
        """Run one full control iteration; deterministic for identical inputs."""
        if self.last_t_ms is not None and tick.t_ms < self.last_t_ms:
            raise ValueError(
                f"tick timestamps must be non-decreasing ({tick.t_ms} < {self.last_t_ms})"
            )
        self.last_t_ms = tick.t_ms

        events, telemetry = self.assemble_event(tick)
        state = self.fsm
        commands: list[ActuatorCommand] = []
        transitions: list[Transition] = []
        for ev in events:
            before = state
            state, emitted = fsm_step(state, ev, tick.t_ms, self.config)
            if state.phase is not before.phase:
                transitions.append(
                    Transition(before.phase, state.phase, transition_reason(before.phase, ev, state.phase))
                )
            for cmd in emitted:
                if actuator_guard(self.last_cmd, cmd, self.config) is GuardResult.ACCEPT:
                    commands.append(cmd)
                    self.last_cmd = cmd
                else:
                    # Interlock trip: latch Fault, drop the command, keep the
                    # hand state the actuator actually has.
                    tripped_from = state.phase
                    state = FsmState(
                        Phase.FAULT,
                        0,
                        tick.t_ms,
                        state.rearm_ok,
                        before.hand_closed,
                        state.last_cmd_t_ms,
                    )
                    transitions.append(Transition(tripped_from, Phase.FAULT, Reason.INTERLOCK))
        self.fsm = state
        return TickOutput(
            state_after=state,
            commands=tuple(commands),
            transitions=tuple(transitions),
            telemetry=telemetry,
        )
