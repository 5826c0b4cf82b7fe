/** Wire protocol for the simulator's teleop socket: one JSON object per
 * message, state at 30 Hz from the server, commands from the UI. Parsing is
 * tolerant — anything malformed is dropped, never thrown. */

export interface StateMsg {
  type: "state";
  t: number;
  q: number[];
  pos: [number, number, number];
  quat: [number, number, number, number]; // wxyz
  normal: [number, number, number] | null; // probe frame; null before first estimate
  force_n: number;
  err_deg: number | null;
  stage: "landing" | "scanning";
}

export interface CmdMsg {
  type: "cmd";
  vx: number;
  vy: number;
  wz: number;
}

export interface ActionMsg {
  type: "action";
  name: "land" | "retract" | "pause" | "resume";
}

export interface TuneMsg {
  type: "tune";
  key: string;
  value: number;
}

export type ClientMsg = CmdMsg | ActionMsg | TuneMsg;

export const V_MAX = 0.02; // m/s lateral
export const W_MAX = 0.3; // rad/s about the probe axis

function clamp(x: number, limit: number): number {
  if (!Number.isFinite(x)) return 0;
  return Math.min(limit, Math.max(-limit, x));
}

/** Clamping happens here, at the wire boundary, so no input device can push
 * an oversized value onto the socket no matter what it reports. */
export function clampCommand(vx: number, vy: number, wz: number): CmdMsg {
  return {
    type: "cmd",
    vx: clamp(vx, V_MAX),
    vy: clamp(vy, V_MAX),
    wz: clamp(wz, W_MAX),
  };
}

function finiteVec(v: unknown, n: number): boolean {
  return (
    Array.isArray(v) &&
    v.length === n &&
    v.every((x) => typeof x === "number" && Number.isFinite(x))
  );
}

function finiteOrNull(v: unknown): boolean {
  return v === null || (typeof v === "number" && Number.isFinite(v));
}

export function parseState(raw: string): StateMsg | null {
  let m: Record<string, unknown>;
  try {
    m = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof m !== "object" || m === null || m["type"] !== "state") return null;
  if (typeof m["t"] !== "number" || !Number.isFinite(m["t"])) return null;
  if (!finiteVec(m["q"], 7) || !finiteVec(m["pos"], 3) || !finiteVec(m["quat"], 4)) return null;
  if (!(m["normal"] === null || finiteVec(m["normal"], 3))) return null;
  if (typeof m["force_n"] !== "number" || !Number.isFinite(m["force_n"])) return null;
  if (!finiteOrNull(m["err_deg"])) return null;
  if (m["stage"] !== "landing" && m["stage"] !== "scanning") return null;
  return m as unknown as StateMsg;
}

/** Resolve the socket endpoint: a `?ws=` query parameter wins, otherwise the
 * page's own host with the standard path. */
export function socketUrl(search: string, loc: { protocol: string; host: string }): string {
  const q = new URLSearchParams(search).get("ws");
  if (q) return q;
  const scheme = loc.protocol === "https:" ? "wss" : "ws";
  return `${scheme}://${loc.host}/ws/teleop`;
}
