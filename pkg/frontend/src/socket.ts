// Gateway connection with automatic reconnect and request/response pairing.
//
// The websocket implementation is injectable so tests (and the node-based
// round-trip harness) can supply 'ws' or a fake; browsers use the global
// WebSocket by default.

import { ClientMessage, Response, ServerMessage, Snapshot, parseServerMessage } from "./protocol.js";

export interface WsLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
}

export type WsFactory = (url: string) => WsLike;

export interface GatewayClientOptions {
  wsFactory?: WsFactory;
  /** initial reconnect delay; doubles up to maxBackoffMs */
  backoffMs?: number;
  maxBackoffMs?: number;
  onSnapshot?: (snap: Snapshot) => void;
  onStatus?: (connected: boolean) => void;
  onProtocolError?: (raw: string) => void;
}

interface Pending {
  resolve: (r: Response) => void;
  reject: (err: Error) => void;
}

export class GatewayClient {
  readonly url: string;
  private readonly factory: WsFactory;
  private readonly backoffMs: number;
  private readonly maxBackoffMs: number;
  private currentBackoff: number;
  private ws: WsLike | null = null;
  private closed = false;
  private refCounter = 0;
  private pending = new Map<string, Pending>();
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;

  onSnapshot: (snap: Snapshot) => void;
  onStatus: (connected: boolean) => void;
  onProtocolError: (raw: string) => void;
  connected = false;

  constructor(url: string, opts: GatewayClientOptions = {}) {
    this.url = url;
    const globalWs = (globalThis as { WebSocket?: new (url: string) => unknown }).WebSocket;
    this.factory =
      opts.wsFactory ??
      ((u: string) => {
        if (!globalWs) throw new Error("no WebSocket implementation available");
        return new globalWs(u) as WsLike;
      });
    this.backoffMs = opts.backoffMs ?? 500;
    this.maxBackoffMs = opts.maxBackoffMs ?? 5000;
    this.currentBackoff = this.backoffMs;
    this.onSnapshot = opts.onSnapshot ?? (() => {});
    this.onStatus = opts.onStatus ?? (() => {});
    this.onProtocolError = opts.onProtocolError ?? (() => {});
  }

  connect(): void {
    if (this.closed) return;
    const ws = this.factory(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.connected = true;
      this.currentBackoff = this.backoffMs;
      this.onStatus(true);
    };
    ws.onmessage = (ev) => this.handleFrame(String(ev.data));
    ws.onerror = () => {
      // onclose follows; nothing to do here
    };
    ws.onclose = () => {
      const wasConnected = this.connected;
      this.connected = false;
      this.failPending(new Error("connection lost"));
      if (wasConnected) this.onStatus(false);
      this.scheduleReconnect();
    };
  }

  close(): void {
    this.closed = true;
    if (this.reconnectTimer !== null) clearTimeout(this.reconnectTimer);
    this.failPending(new Error("client closed"));
    if (this.ws) this.ws.close();
  }

  /** Send one message; resolves with the matching ack/error. Rejects
   * immediately while disconnected (inputs are dropped, never queued). */
  send(msg: ClientMessage): Promise<Response> {
    if (!this.connected || !this.ws) {
      return Promise.reject(new Error("not connected"));
    }
    const ref = `c${++this.refCounter}`;
    const framed = { ...msg, ref };
    return new Promise<Response>((resolve, reject) => {
      this.pending.set(ref, { resolve, reject });
      this.ws!.send(JSON.stringify(framed));
    });
  }

  private handleFrame(raw: string): void {
    const msg = parseServerMessage(raw);
    if (msg === null) {
      this.onProtocolError(raw);
      return;
    }
    if (msg.type === "snapshot") {
      this.onSnapshot(msg);
      return;
    }
    const ref = msg.ref;
    if (ref !== null && this.pending.has(ref)) {
      const entry = this.pending.get(ref)!;
      this.pending.delete(ref);
      entry.resolve(msg);
    }
  }

  private failPending(err: Error): void {
    for (const entry of this.pending.values()) entry.reject(err);
    this.pending.clear();
  }

  private scheduleReconnect(): void {
    if (this.closed || this.reconnectTimer !== null) return;
    const delay = this.currentBackoff;
    this.currentBackoff = Math.min(this.currentBackoff * 2, this.maxBackoffMs);
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      this.connect();
    }, delay);
  }
}
