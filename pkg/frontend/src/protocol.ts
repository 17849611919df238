// Wire types for the gateway websocket protocol (see docs/ws_protocol.md).
// The python side freezes this schema with a golden file; keep in sync.

export interface DetectionInfo {
  class_id: number;
  label: string;
  confidence: number;
  cx: number;
  cy: number;
  w: number;
  h: number;
}

export interface WorldObjectInfo {
  id: string;
  label: string;
  class_id: number;
  x: number;
  y: number;
  z: number;
  radius: number;
  attached: boolean;
}

export interface SessionEvent {
  t_ms: number;
  kind: "transition" | "cmd";
  from?: string;
  to?: string;
  reason?: string;
  action?: string;
}

export interface Snapshot {
  type: "snapshot";
  t_ms: number;
  phase: string;
  confirm_count: number;
  paused: boolean;
  ended: boolean;
  telemetry: {
    filtered_tof_mm: number | null;
    tof_status: string | null;
    tilt_deg: number | null;
    gesture: string;
    target: DetectionInfo | null;
  };
  detections: DetectionInfo[];
  actuator: {
    hand_closed: boolean;
    last_action: string | null;
    last_cmd_t_ms: number | null;
  };
  world: {
    hand: { x: number; y: number; z: number; yaw_deg: number; pitch_deg: number; roll_deg: number };
    objects: WorldObjectInfo[];
    attached_id: string | null;
  };
  limits: {
    tilt_thresh_deg: number;
    tilt_hysteresis_deg: number;
    d_grasp_mm: number;
    conf_min: number;
    roi_frac: number;
    K_confirm: number;
    fov_h_deg: number;
    fov_v_deg: number;
    tof_cone_half_angle_deg: number;
    max_detect_mm: number;
    d_attach_mm: number;
    max_speed_mm_s: number;
  };
  events: SessionEvent[];
}

export interface Ack {
  type: "ack";
  ref: string | null;
}

export interface ErrorMsg {
  type: "error";
  ref: string | null;
  reason: string;
}

export type ServerMessage = Snapshot | Ack | ErrorMsg;
export type Response = Ack | ErrorMsg;

export type ClientMessage =
  | { type: "set_velocity"; vx: number; vy: number; vz: number; ref?: string }
  | { type: "set_tilt"; deg: number; ref?: string }
  | { type: "spawn_object"; label: string; center: [number, number, number]; radius: number; ref?: string }
  | { type: "remove_object"; id: string; ref?: string }
  | { type: "reset"; seed?: number; ref?: string }
  | { type: "pause"; ref?: string }
  | { type: "resume"; ref?: string }
  | { type: "step"; n: number; ref?: string }
  | { type: "set_param"; key: string; value: number; ref?: string };

/** Parse one incoming frame; returns null (never throws) on garbage so a
 * malformed message can be logged and the previous state kept. */
export function parseServerMessage(raw: string): ServerMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const msg = data as Record<string, unknown>;
  if (msg.type === "ack") return { type: "ack", ref: (msg.ref ?? null) as string | null };
  if (msg.type === "error") {
    if (typeof msg.reason !== "string") return null;
    return { type: "error", ref: (msg.ref ?? null) as string | null, reason: msg.reason };
  }
  if (msg.type === "snapshot") {
    if (
      typeof msg.t_ms !== "number" ||
      typeof msg.phase !== "string" ||
      typeof msg.telemetry !== "object" ||
      typeof msg.world !== "object" ||
      typeof msg.limits !== "object" ||
      !Array.isArray(msg.detections) ||
      !Array.isArray(msg.events)
    ) {
      return null;
    }
    return msg as unknown as Snapshot;
  }
  return null;
}
