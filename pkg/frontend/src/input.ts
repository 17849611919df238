// Keyboard/slider to client-message mapping with rate limiting.
//
// Key map (planar motion plus depth):
//   w/ArrowUp forward (+x), s/ArrowDown back, a/ArrowLeft left (+y),
//   d/ArrowRight right, q up (+z), e down.
// Releasing a key zeroes its velocity component. Messages are rate-limited
// to at most one per RATE_LIMIT_MS per channel (velocity, tilt); the last
// change is never lost, it goes out on the next flush() tick.

import { ClientMessage } from "./protocol.js";

export const KEY_SPEED_MM_S = 150;
export const RATE_LIMIT_MS = 50; // 20 msgs/s per channel

const KEY_AXES: Record<string, [number, number, number]> = {
  w: [1, 0, 0],
  arrowup: [1, 0, 0],
  s: [-1, 0, 0],
  arrowdown: [-1, 0, 0],
  a: [0, 1, 0],
  arrowleft: [0, 1, 0],
  d: [0, -1, 0],
  arrowright: [0, -1, 0],
  q: [0, 0, 1],
  e: [0, 0, -1],
};

export type SendFn = (msg: ClientMessage) => void;

export class InputController {
  private readonly send: SendFn;
  private readonly now: () => number;
  private held = new Set<string>();
  private tiltDeg = 0;
  private velocityDirty = false;
  private tiltDirty = false;
  private lastVelocitySent = -Infinity;
  private lastTiltSent = -Infinity;

  constructor(send: SendFn, now: () => number = () => Date.now()) {
    this.send = send;
    this.now = now;
  }

  velocity(): [number, number, number] {
    let vx = 0;
    let vy = 0;
    let vz = 0;
    for (const key of this.held) {
      const axis = KEY_AXES[key];
      vx += axis[0] * KEY_SPEED_MM_S;
      vy += axis[1] * KEY_SPEED_MM_S;
      vz += axis[2] * KEY_SPEED_MM_S;
    }
    return [vx, vy, vz];
  }

  /** Returns true when the key is a binding (so the UI can preventDefault). */
  keyDown(key: string): boolean {
    const k = key.toLowerCase();
    if (!(k in KEY_AXES)) return false;
    if (!this.held.has(k)) {
      this.held.add(k);
      this.velocityDirty = true;
      this.flush();
    }
    return true;
  }

  keyUp(key: string): boolean {
    const k = key.toLowerCase();
    if (!(k in KEY_AXES)) return false;
    if (this.held.has(k)) {
      this.held.delete(k);
      this.velocityDirty = true;
      this.flush();
    }
    return true;
  }

  setTilt(deg: number): void {
    if (deg !== this.tiltDeg) {
      this.tiltDeg = deg;
      this.tiltDirty = true;
      this.flush();
    }
  }

  /** Send whatever is pending, respecting the per-channel rate limit.
   * The UI calls this on a timer; tests call it directly. */
  flush(): void {
    const t = this.now();
    if (this.velocityDirty && t - this.lastVelocitySent >= RATE_LIMIT_MS) {
      const [vx, vy, vz] = this.velocity();
      this.send({ type: "set_velocity", vx, vy, vz });
      this.velocityDirty = false;
      this.lastVelocitySent = t;
    }
    if (this.tiltDirty && t - this.lastTiltSent >= RATE_LIMIT_MS) {
      this.send({ type: "set_tilt", deg: this.tiltDeg });
      this.tiltDirty = false;
      this.lastTiltSent = t;
    }
  }

  releaseAll(): void {
    if (this.held.size > 0) {
      this.held.clear();
      this.velocityDirty = true;
      this.flush();
    }
  }
}
