import { describe, expect, it } from "vitest";

import { parseServerMessage } from "../src/protocol.js";

const SNAPSHOT = {
  type: "snapshot",
  t_ms: 100,
  phase: "scanning",
  confirm_count: 0,
  paused: false,
  ended: false,
  telemetry: { filtered_tof_mm: null, tof_status: null, tilt_deg: null, gesture: "inactive", target: null },
  detections: [],
  actuator: { hand_closed: false, last_action: null, last_cmd_t_ms: null },
  world: {
    hand: { x: 0, y: 0, z: 0, yaw_deg: 0, pitch_deg: 0, roll_deg: 0 },
    objects: [],
    attached_id: null,
  },
  limits: {
    tilt_thresh_deg: 60, tilt_hysteresis_deg: 15, d_grasp_mm: 100, conf_min: 0.5,
    roi_frac: 0.6, K_confirm: 3, fov_h_deg: 84, fov_v_deg: 87,
    tof_cone_half_angle_deg: 12.5, max_detect_mm: 600, d_attach_mm: 60, max_speed_mm_s: 500,
  },
  events: [],
};

describe("parseServerMessage", () => {
  it("parses snapshots", () => {
    const msg = parseServerMessage(JSON.stringify(SNAPSHOT));
    expect(msg?.type).toBe("snapshot");
    if (msg?.type === "snapshot") expect(msg.phase).toBe("scanning");
  });

  it("parses ack and error with refs", () => {
    expect(parseServerMessage('{"type":"ack","ref":"c1"}')).toEqual({ type: "ack", ref: "c1" });
    expect(parseServerMessage('{"type":"error","ref":null,"reason":"nope"}')).toEqual({
      type: "error",
      ref: null,
      reason: "nope",
    });
  });

  it("returns null for garbage instead of throwing", () => {
    expect(parseServerMessage("not json")).toBeNull();
    expect(parseServerMessage('"just a string"')).toBeNull();
    expect(parseServerMessage('{"type":"snapshot"}')).toBeNull(); // missing fields
    expect(parseServerMessage('{"type":"mystery"}')).toBeNull();
    expect(parseServerMessage('{"type":"error"}')).toBeNull(); // no reason
  });
});
