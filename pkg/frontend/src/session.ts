/** Live session against the simulator: owns the socket, the reconnect
 * backoff, the rolling telemetry buffers, and the 20 Hz command pump.
 *
 * Dead-man behavior: while input is active a clamped command goes out every
 * pump tick; when input returns to zero exactly one zero command is sent and
 * the pump goes silent until input resumes. Discrete messages (actions,
 * tunes) are buffered while disconnected and flushed on open. The UI holds
 * no simulation state — everything rendered comes from the state stream.
 */

import { ClientMsg, StateMsg, clampCommand, parseState } from "./protocol.js";

export interface SocketLike {
  readyState: number;
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
}

const OPEN = 1;
const SEND_HZ = 20;
const RECONNECT_BASE_MS = 250;
const RECONNECT_CAP_MS = 2000;
const PENDING_LIMIT = 32;
const BUFFER_SAMPLES = 600;
const TRAIL_SAMPLES = 300;

export class RingBuffer {
  private data: number[] = [];

  constructor(readonly capacity: number) {}

  push(v: number): void {
    this.data.push(v);
    if (this.data.length > this.capacity) this.data.shift();
  }

  get length(): number {
    return this.data.length;
  }

  values(): readonly number[] {
    return this.data;
  }

  last(): number | undefined {
    return this.data[this.data.length - 1];
  }
}

export type SessionStatus = "connecting" | "connected" | "reconnecting";

export class Session {
  latest: StateMsg | null = null;
  readonly force = new RingBuffer(BUFFER_SAMPLES);
  readonly err = new RingBuffer(BUFFER_SAMPLES);
  readonly trail: Array<[number, number, number]> = [];
  status: SessionStatus = "connecting";
  malformed = 0;
  states = 0;

  /** Polled every pump tick; wire this to the input tracker. */
  input: () => { vx: number; vy: number; wz: number } = () => ({ vx: 0, vy: 0, wz: 0 });
  onState: ((s: StateMsg) => void) | null = null;

  private socket: SocketLike | null = null;
  private pending: ClientMsg[] = [];
  private attempts = 0;
  private sentZero = true;
  private pump: ReturnType<typeof setInterval>;
  private retry: ReturnType<typeof setTimeout> | null = null;
  private closed = false;

  constructor(
    readonly url: string,
    private makeSocket: (url: string) => SocketLike = (u) => new WebSocket(u) as unknown as SocketLike,
  ) {
    this.connect();
    this.pump = setInterval(() => this.tick(), 1000 / SEND_HZ);
  }

  private connect(): void {
    const ws = this.makeSocket(this.url);
    this.socket = ws;
    ws.onopen = () => {
      if (ws !== this.socket) return;
      this.status = "connected";
      this.attempts = 0;
      this.flushPending();
      this.tick(true); // sync the current (possibly zero) command once
    };
    ws.onmessage = (ev) => {
      if (ws !== this.socket) return;
      const msg = parseState(String(ev.data));
      if (!msg) {
        this.malformed += 1;
        return;
      }
      this.latest = msg;
      this.states += 1;
      this.force.push(msg.force_n);
      this.err.push(msg.err_deg ?? NaN);
      this.trail.push([msg.pos[0], msg.pos[1], msg.pos[2]]);
      if (this.trail.length > TRAIL_SAMPLES) this.trail.shift();
      this.onState?.(msg);
    };
    const dropped = () => {
      if (ws === this.socket) this.scheduleReconnect();
    };
    ws.onclose = dropped;
    ws.onerror = dropped;
  }

  private scheduleReconnect(): void {
    if (this.closed || this.retry !== null) return;
    this.status = "reconnecting";
    const delay = Math.min(RECONNECT_BASE_MS * 2 ** this.attempts, RECONNECT_CAP_MS);
    this.attempts += 1;
    this.retry = setTimeout(() => {
      this.retry = null;
      if (!this.closed) this.connect();
    }, delay);
  }

  private tick(force = false): void {
    const raw = this.input();
    const cmd = clampCommand(raw.vx, raw.vy, raw.wz);
    const zero = cmd.vx === 0 && cmd.vy === 0 && cmd.wz === 0;
    if (zero && this.sentZero && !force) return;
    if (this.push(cmd)) this.sentZero = zero;
  }

  action(name: "land" | "retract" | "pause" | "resume"): void {
    this.enqueue({ type: "action", name });
  }

  tune(key: string, value: number): void {
    this.enqueue({ type: "tune", key, value });
  }

  private enqueue(msg: ClientMsg): void {
    if (!this.push(msg)) {
      this.pending.push(msg);
      if (this.pending.length > PENDING_LIMIT) this.pending.shift();
    }
  }

  private flushPending(): void {
    const queued = this.pending;
    this.pending = [];
    for (const msg of queued) this.enqueue(msg);
  }

  private push(msg: ClientMsg): boolean {
    const ws = this.socket;
    if (!ws || ws.readyState !== OPEN) return false;
    try {
      ws.send(JSON.stringify(msg));
      return true;
    } catch {
      this.scheduleReconnect();
      return false;
    }
  }

  close(): void {
    this.closed = true;
    clearInterval(this.pump);
    if (this.retry !== null) clearTimeout(this.retry);
    this.socket?.close();
  }
}
