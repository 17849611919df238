// DOM wiring: connect, pump snapshots into ViewState, render on animation
// frames, translate inputs into client messages.

import { GatewayClient } from "./socket.js";
import { InputController, RATE_LIMIT_MS } from "./input.js";
import {
  ViewState,
  applyConnection,
  applySnapshot,
  formatEvent,
  initialViewState,
  noteProtocolError,
  phaseBadgeText,
} from "./state.js";
import { Ctx2D, PHASE_COLORS, renderTiltGauge, renderWorld } from "./render.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const view: ViewState = initialViewState();

const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
const client = new GatewayClient(wsUrl, {
  onSnapshot: (snap) => applySnapshot(view, snap),
  onStatus: (connected) => applyConnection(view, connected),
  onProtocolError: (raw) => {
    console.warn("malformed server frame kept out of the view:", raw);
    noteProtocolError(view);
  },
});
client.connect();

const send = (msg: Parameters<GatewayClient["send"]>[0]) => {
  client.send(msg).catch(() => {
    /* disconnected: inputs are dropped by design */
  });
};
const input = new InputController(send);
setInterval(() => input.flush(), RATE_LIMIT_MS);

// keyboard
window.addEventListener("keydown", (ev) => {
  if (ev.repeat) return;
  if (ev.key === "[" || ev.key === "]") {
    const slider = el<HTMLInputElement>("tilt-slider");
    const delta = ev.key === "]" ? 10 : -10;
    slider.value = String(Math.max(0, Math.min(90, Number(slider.value) + delta)));
    slider.dispatchEvent(new Event("input"));
    return;
  }
  if (input.keyDown(ev.key)) ev.preventDefault();
});
window.addEventListener("keyup", (ev) => {
  if (input.keyUp(ev.key)) ev.preventDefault();
});
window.addEventListener("blur", () => input.releaseAll());

// tilt slider
const slider = el<HTMLInputElement>("tilt-slider");
slider.addEventListener("input", () => {
  el<HTMLSpanElement>("tilt-value").textContent = `${slider.value}°`;
  input.setTilt(Number(slider.value));
});

// buttons
el<HTMLButtonElement>("btn-spawn").addEventListener("click", () => {
  const snap = view.snapshot;
  const hand = snap ? snap.world.hand : { x: 0, y: 0, z: 0, yaw_deg: 0 };
  const yaw = ((snap ? snap.world.hand.yaw_deg : 0) * Math.PI) / 180;
  const dist = 350;
  send({
    type: "spawn_object",
    label: "object",
    center: [hand.x + Math.cos(yaw) * dist, hand.y + Math.sin(yaw) * dist, hand.z],
    radius: 30,
  });
});
el<HTMLButtonElement>("btn-reset").addEventListener("click", () => send({ type: "reset" }));
el<HTMLButtonElement>("btn-pause").addEventListener("click", () => {
  const paused = view.snapshot?.paused ?? false;
  send({ type: paused ? "resume" : "pause" });
});
el<HTMLButtonElement>("btn-step").addEventListener("click", () => send({ type: "step", n: 17 }));

// rendering
const worldCanvas = el<HTMLCanvasElement>("world");
const gaugeCanvas = el<HTMLCanvasElement>("tilt-gauge");

function frame(): void {
  const wctx = worldCanvas.getContext("2d") as unknown as Ctx2D;
  const gctx = gaugeCanvas.getContext("2d") as unknown as Ctx2D;
  renderWorld(wctx, worldCanvas.width, worldCanvas.height, view);
  renderTiltGauge(gctx, gaugeCanvas.width, gaugeCanvas.height, view);

  el<HTMLDivElement>("banner").style.display = view.connected ? "none" : "block";
  const badge = el<HTMLSpanElement>("phase-badge");
  badge.textContent = phaseBadgeText(view);
  const phase = view.snapshot?.phase ?? "";
  badge.style.background = PHASE_COLORS[phase] ?? "#30363d";
  const snap = view.snapshot;
  if (snap) {
    el<HTMLSpanElement>("confirm-count").textContent =
      `${snap.confirm_count}/${snap.limits.K_confirm}`;
    el<HTMLSpanElement>("sim-time").textContent = `${(snap.t_ms / 1000).toFixed(2)} s`;
    el<HTMLSpanElement>("tof-value").textContent =
      snap.telemetry.filtered_tof_mm === null ? "out of range" : `${snap.telemetry.filtered_tof_mm} mm`;
    el<HTMLButtonElement>("btn-pause").textContent = snap.paused ? "resume" : "pause";

    const detList = el<HTMLUListElement>("detections");
    detList.innerHTML = "";
    for (const d of snap.detections) {
      const li = document.createElement("li");
      const isTarget = snap.telemetry.target && snap.telemetry.target.label === d.label
        && snap.telemetry.target.cx === d.cx;
      li.textContent = `${d.label} ${(d.confidence * 100).toFixed(0)}% @ (${d.cx.toFixed(2)}, ${d.cy.toFixed(2)})${isTarget ? " ← target" : ""}`;
      detList.appendChild(li);
    }

    const log = el<HTMLUListElement>("event-log");
    log.innerHTML = "";
    for (const ev of view.eventLog.slice(-12).reverse()) {
      const li = document.createElement("li");
      li.textContent = formatEvent(ev);
      log.appendChild(li);
    }
  }
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);
