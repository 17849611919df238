"""Vision-gated grasp controller, simulated sensor world, and trace tooling."""

from .controller import (
    Action,
    ActuatorCommand,
    ControlEvent,
    ControllerConfig,
    FsmState,
    GraspController,
    Phase,
    Reason,
    TickInput,
    TickOutput,
    actuator_guard,
    fsm_step,
    staleness_check,
)
from .perception import (
    AccelSample,
    DegenerateVector,
    Detection,
    GesturePhase,
    GestureState,
    MedianFilterState,
    PerceptionConfig,
    TofSample,
    TofStatus,
    distance_gate,
    gesture_step,
    median_filter_push,
    select_target,
    tilt_angle,
)
from .scenario import ParseError, Scenario, ValidationError, load_scenario, load_scenario_file
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
from .gateway import SessionConfig, SessionEngine, SessionResult, run_session
from .metrics import Episode, Metrics, compute_metrics
from .trace import (
    ConfigMismatch,
    EmptyTrace,
    FieldTypeError,
    MalformedLine,
    OutOfOrder,
    TraceRecord,
    UnknownKind,
    decode_record,
    encode_record,
    load_trace,
    replay,
)

__version__ = "0.1.0"
