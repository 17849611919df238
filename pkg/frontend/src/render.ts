// Canvas rendering: a top-down view of the world (x forward = up on
// screen, y left = left on screen) plus a tilt gauge. Everything drawn
// comes straight from the latest snapshot.

import { Snapshot } from "./protocol.js";
import { ViewState } from "./state.js";

// The subset of CanvasRenderingContext2D we touch, so tests can record calls.
export interface Ctx2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  textAlign: CanvasTextAlign;
  globalAlpha: number;
  save(): void;
  restore(): void;
  translate(x: number, y: number): void;
  rotate(rad: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  closePath(): void;
  fill(): void;
  stroke(): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
  setLineDash(segments: number[]): void;
}

// World window shown on the canvas, in mm.
const VIEW_X_MIN = -150;
const VIEW_X_MAX = 750;
const VIEW_Y_MIN = -450;
const VIEW_Y_MAX = 450;

export const PHASE_COLORS: Record<string, string> = {
  scanning: "#2f81f7",
  closing: "#d29922",
  holding: "#3fb950",
  opening: "#a371f7",
  fault: "#f85149",
};

export interface WorldTransform {
  toCanvas(x_mm: number, y_mm: number): [number, number];
  scale: number;
}

/** world (x forward, y left) -> canvas (x right, y down). */
export function worldTransform(width: number, height: number): WorldTransform {
  const scaleX = height / (VIEW_X_MAX - VIEW_X_MIN);
  const scaleY = width / (VIEW_Y_MAX - VIEW_Y_MIN);
  const scale = Math.min(scaleX, scaleY);
  return {
    scale,
    toCanvas(x_mm: number, y_mm: number): [number, number] {
      const cx = width / 2 - y_mm * scale;
      const cy = height - (x_mm - VIEW_X_MIN) * scale;
      return [cx, cy];
    },
  };
}

export function renderWorld(ctx: Ctx2D, width: number, height: number, view: ViewState): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#0d1117";
  ctx.fillRect(0, 0, width, height);
  const snap = view.snapshot;
  if (!snap) {
    ctx.fillStyle = "#8b949e";
    ctx.font = "14px sans-serif";
    ctx.textAlign = "center";
    ctx.fillText("waiting for snapshot...", width / 2, height / 2);
    return;
  }
  const tf = worldTransform(width, height);
  const hand = snap.world.hand;
  const yawRad = (hand.yaw_deg * Math.PI) / 180;
  const [hx, hy] = tf.toCanvas(hand.x, hand.y);

  // Sensor geometry: FOV wedge and TOF cone along the hand's forward axis.
  drawWedge(ctx, tf, hand.x, hand.y, yawRad, snap.limits.fov_h_deg, snap.limits.max_detect_mm,
    "rgba(47, 129, 247, 0.08)", "rgba(47, 129, 247, 0.35)");
  drawWedge(ctx, tf, hand.x, hand.y, yawRad, snap.limits.tof_cone_half_angle_deg * 2, 200,
    "rgba(210, 153, 34, 0.15)", "rgba(210, 153, 34, 0.5)");

  // Grasp-gate reach around the palm.
  ctx.beginPath();
  ctx.arc(hx, hy, snap.limits.d_grasp_mm * tf.scale, 0, Math.PI * 2);
  ctx.setLineDash([4, 4]);
  ctx.strokeStyle = "rgba(248, 81, 73, 0.6)";
  ctx.lineWidth = 1;
  ctx.stroke();
  ctx.setLineDash([]);

  // Objects: circles; the attached one rides the hand and gets a highlight,
  // detected ones get a marker ring.
  const detected = snap.detections.length > 0;
  for (const obj of snap.world.objects) {
    const [ox, oy] = tf.toCanvas(obj.x, obj.y);
    ctx.beginPath();
    ctx.arc(ox, oy, Math.max(2, obj.radius * tf.scale), 0, Math.PI * 2);
    ctx.fillStyle = obj.attached ? "#3fb950" : "#8b949e";
    ctx.globalAlpha = obj.attached ? 0.9 : 0.7;
    ctx.fill();
    ctx.globalAlpha = 1.0;
    if (obj.attached) {
      ctx.strokeStyle = "#3fb950";
      ctx.lineWidth = 2;
      ctx.stroke();
    }
  }
  if (detected) {
    // marker ring inside the FOV wedge for the selected/first detection
    const target = snap.telemetry.target ?? snap.detections[0];
    drawDetectionMarker(ctx, tf, hand.x, hand.y, yawRad, snap, target.cx);
  }

  // The hand: a triangle pointing along its forward axis.
  ctx.save();
  ctx.translate(hx, hy);
  ctx.rotate(-yawRad);
  ctx.beginPath();
  ctx.moveTo(0, -14);
  ctx.lineTo(8, 8);
  ctx.lineTo(-8, 8);
  ctx.closePath();
  ctx.fillStyle = snap.actuator.hand_closed ? "#3fb950" : "#e6edf3";
  ctx.fill();
  ctx.restore();
}

function drawWedge(
  ctx: Ctx2D,
  tf: WorldTransform,
  x_mm: number,
  y_mm: number,
  yawRad: number,
  fullAngleDeg: number,
  range_mm: number,
  fillStyle: string,
  strokeStyle: string
): void {
  const half = ((fullAngleDeg / 2) * Math.PI) / 180;
  const [cx, cy] = tf.toCanvas(x_mm, y_mm);
  const r = range_mm * tf.scale;
  // canvas angle of the forward axis: world +x maps to screen "up" (-y),
  // yaw rotates left (towards +y world = screen left)
  const forward = -Math.PI / 2 - yawRad;
  ctx.beginPath();
  ctx.moveTo(cx, cy);
  ctx.arc(cx, cy, r, forward - half, forward + half);
  ctx.closePath();
  ctx.fillStyle = fillStyle;
  ctx.fill();
  ctx.strokeStyle = strokeStyle;
  ctx.lineWidth = 1;
  ctx.stroke();
}

function drawDetectionMarker(
  ctx: Ctx2D,
  tf: WorldTransform,
  x_mm: number,
  y_mm: number,
  yawRad: number,
  snap: Snapshot,
  cx01: number
): void {
  // place the marker along the detection's bearing at the measured range
  const bearing = (cx01 - 0.5) * snap.limits.fov_h_deg;
  const range = snap.telemetry.filtered_tof_mm ?? snap.limits.max_detect_mm / 2;
  const angle = yawRad - (bearing * Math.PI) / 180;
  const mx = x_mm + Math.cos(angle) * range;
  const my = y_mm + Math.sin(angle) * range;
  const [px, py] = tf.toCanvas(mx, my);
  ctx.beginPath();
  ctx.arc(px, py, 6, 0, Math.PI * 2);
  ctx.strokeStyle = "#2f81f7";
  ctx.lineWidth = 2;
  ctx.stroke();
}

/** Fraction of the gauge width for a tilt value; the threshold marker uses
 * the same mapping, so marker crossing == tilt >= threshold exactly. */
export function gaugeFraction(valueDeg: number, maxDeg = 90): number {
  return Math.max(0, Math.min(1, valueDeg / maxDeg));
}

export function renderTiltGauge(ctx: Ctx2D, width: number, height: number, view: ViewState): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#161b22";
  ctx.fillRect(0, 0, width, height);
  const snap = view.snapshot;
  if (!snap) return;
  const tilt = snap.telemetry.tilt_deg ?? 0;
  const frac = gaugeFraction(tilt);
  const active = snap.telemetry.gesture === "active";
  ctx.fillStyle = active ? "#a371f7" : tilt >= snap.limits.tilt_thresh_deg ? "#d29922" : "#2f81f7";
  ctx.fillRect(0, 0, frac * width, height);
  // threshold and clear lines
  for (const [deg, color] of [
    [snap.limits.tilt_thresh_deg, "#f85149"],
    [snap.limits.tilt_thresh_deg - snap.limits.tilt_hysteresis_deg, "#d29922"],
  ] as [number, string][]) {
    const x = gaugeFraction(deg) * width;
    ctx.beginPath();
    ctx.moveTo(x, 0);
    ctx.lineTo(x, height);
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.stroke();
  }
  ctx.fillStyle = "#e6edf3";
  ctx.font = "12px sans-serif";
  ctx.textAlign = "left";
  ctx.fillText(`tilt ${tilt.toFixed(1)}° (${snap.telemetry.gesture})`, 6, height - 6);
}
