import { describe, expect, it } from "vitest";

import { Snapshot } from "../src/protocol.js";
import { gaugeFraction, renderTiltGauge, renderWorld, worldTransform } from "../src/render.js";
import type { Ctx2D } from "../src/render.js";
import { applySnapshot, initialViewState } from "../src/state.js";

/** Records every drawing call so assertions can inspect what was drawn. */
function recordingCtx(): Ctx2D & { calls: [string, ...unknown[]][]; texts: string[] } {
  const calls: [string, ...unknown[]][] = [];
  const texts: string[] = [];
  const record =
    (name: string) =>
    (...args: unknown[]) => {
      calls.push([name, ...args]);
      if (name === "fillText") texts.push(String(args[0]));
    };
  return {
    calls,
    texts,
    fillStyle: "",
    strokeStyle: "",
    lineWidth: 1,
    font: "",
    textAlign: "left" as CanvasTextAlign,
    globalAlpha: 1,
    save: record("save"),
    restore: record("restore"),
    translate: record("translate"),
    rotate: record("rotate"),
    beginPath: record("beginPath"),
    moveTo: record("moveTo"),
    lineTo: record("lineTo"),
    arc: record("arc"),
    closePath: record("closePath"),
    fill: record("fill"),
    stroke: record("stroke"),
    fillRect: record("fillRect"),
    strokeRect: record("strokeRect"),
    clearRect: record("clearRect"),
    fillText: record("fillText"),
    setLineDash: record("setLineDash"),
  };
}

function snap(partial: Partial<Snapshot> = {}): Snapshot {
  return {
    type: "snapshot",
    t_ms: 0,
    phase: "scanning",
    confirm_count: 0,
    paused: false,
    ended: false,
    telemetry: { filtered_tof_mm: 120, tof_status: "valid", tilt_deg: 0, gesture: "inactive", target: null },
    detections: [],
    actuator: { hand_closed: false, last_action: null, last_cmd_t_ms: null },
    world: {
      hand: { x: 0, y: 0, z: 0, yaw_deg: 0, pitch_deg: 0, roll_deg: 0 },
      objects: [
        { id: "o1", label: "o1", class_id: 0, x: 400, y: 0, z: 0, radius: 30, attached: false },
      ],
      attached_id: null,
    },
    limits: {
      tilt_thresh_deg: 60, tilt_hysteresis_deg: 15, d_grasp_mm: 100, conf_min: 0.5,
      roi_frac: 0.6, K_confirm: 3, fov_h_deg: 84, fov_v_deg: 87,
      tof_cone_half_angle_deg: 12.5, max_detect_mm: 600, d_attach_mm: 60, max_speed_mm_s: 500,
    },
    events: [],
    ...partial,
  };
}

function viewWith(s: Snapshot) {
  const view = initialViewState();
  applySnapshot(view, s);
  return view;
}

describe("world transform", () => {
  it("maps forward (+x) to up on screen and left (+y) to screen left", () => {
    const tf = worldTransform(560, 560);
    const [x0, y0] = tf.toCanvas(0, 0);
    const [x1, y1] = tf.toCanvas(100, 0);
    expect(y1).toBeLessThan(y0);
    expect(x1).toBeCloseTo(x0);
    const [x2] = tf.toCanvas(0, 100);
    expect(x2).toBeLessThan(x0);
  });
});

describe("renderWorld", () => {
  it("draws placeholder text with no snapshot", () => {
    const ctx = recordingCtx();
    renderWorld(ctx, 560, 560, initialViewState());
    expect(ctx.texts.join(" ")).toContain("waiting");
  });

  it("draws one circle per object plus sensor wedges", () => {
    const ctx = recordingCtx();
    renderWorld(ctx, 560, 560, viewWith(snap()));
    const arcs = ctx.calls.filter(([name]) => name === "arc");
    // two wedge arcs + gate circle + one object; no detection marker
    expect(arcs.length).toBe(4);
  });

  it("draws a detection marker iff detections are present", () => {
    const withDet = snap({
      detections: [{ class_id: 0, label: "o1", confidence: 0.9, cx: 0.5, cy: 0.5, w: 0.1, h: 0.1 }],
    });
    const ctx = recordingCtx();
    renderWorld(ctx, 560, 560, viewWith(withDet));
    const arcs = ctx.calls.filter(([name]) => name === "arc");
    expect(arcs.length).toBe(5); // marker ring added
  });

  it("rotates the hand triangle by the yaw", () => {
    const ctx = recordingCtx();
    renderWorld(ctx, 560, 560, viewWith(snap()));
    const rotations = ctx.calls.filter(([name]) => name === "rotate");
    expect(rotations).toHaveLength(1);
  });
});

describe("tilt gauge", () => {
  it("marker crossing matches tilt >= threshold exactly", () => {
    // the gauge bar and the threshold line use the same mapping
    expect(gaugeFraction(59.999) < gaugeFraction(60)).toBe(true);
    expect(gaugeFraction(60)).toBe(gaugeFraction(60));
    expect(gaugeFraction(95)).toBe(1); // clamped
    expect(gaugeFraction(-5)).toBe(0);
  });

  it("renders the tilt value and gesture state", () => {
    const ctx = recordingCtx();
    renderTiltGauge(ctx, 360, 28, viewWith(snap({
      telemetry: { filtered_tof_mm: null, tof_status: null, tilt_deg: 61.5, gesture: "pending", target: null },
    })));
    expect(ctx.texts.join(" ")).toContain("61.5");
    expect(ctx.texts.join(" ")).toContain("pending");
  });
});
