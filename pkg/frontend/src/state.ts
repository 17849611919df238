// Client-side view state: nothing here simulates anything. The latest
// snapshot is the single source of truth; the event log is just the
// accumulated `events` arrays the server attached to its snapshots.

import { SessionEvent, Snapshot } from "./protocol.js";

export const EVENT_LOG_LIMIT = 60;

export interface ViewState {
  snapshot: Snapshot | null;
  connected: boolean;
  eventLog: SessionEvent[];
  protocolErrors: number;
}

export function initialViewState(): ViewState {
  return { snapshot: null, connected: false, eventLog: [], protocolErrors: 0 };
}

export function applySnapshot(view: ViewState, snap: Snapshot): void {
  view.snapshot = snap;
  if (snap.events.length > 0) {
    view.eventLog.push(...snap.events);
    if (view.eventLog.length > EVENT_LOG_LIMIT) {
      view.eventLog.splice(0, view.eventLog.length - EVENT_LOG_LIMIT);
    }
  }
}

export function applyConnection(view: ViewState, connected: boolean): void {
  view.connected = connected;
}

export function noteProtocolError(view: ViewState): void {
  // malformed frame: count it and keep rendering the previous snapshot
  view.protocolErrors += 1;
}

export function phaseBadgeText(view: ViewState): string {
  if (!view.snapshot) return "NO DATA";
  return view.snapshot.phase.toUpperCase();
}

export function formatEvent(ev: SessionEvent): string {
  const t = (ev.t_ms / 1000).toFixed(2).padStart(6);
  if (ev.kind === "cmd") return `${t}s  CMD ${ev.action?.toUpperCase()}`;
  return `${t}s  ${ev.from} -> ${ev.to} (${ev.reason})`;
}
