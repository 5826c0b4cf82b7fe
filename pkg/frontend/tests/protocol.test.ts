import { describe, expect, it } from "vitest";

import { V_MAX, W_MAX, clampCommand, parseState, socketUrl } from "../src/protocol.js";

const VALID = {
  type: "state",
  t: 1.5,
  q: [0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
  pos: [0.1, 0.2, 0.3],
  quat: [1, 0, 0, 0],
  normal: [0, 0, 1],
  force_n: 3.5,
  err_deg: 0.4,
  stage: "scanning",
};

describe("parseState", () => {
  it("accepts a valid message", () => {
    const m = parseState(JSON.stringify(VALID));
    expect(m).not.toBeNull();
    expect(m!.t).toBe(1.5);
    expect(m!.stage).toBe("scanning");
  });

  it("accepts null normal and err_deg (pre-estimate states)", () => {
    const m = parseState(JSON.stringify({ ...VALID, normal: null, err_deg: null, stage: "landing" }));
    expect(m).not.toBeNull();
    expect(m!.normal).toBeNull();
    expect(m!.err_deg).toBeNull();
  });

  it.each([
    ["not json at all", "garbage{"],
    ["a json array", "[1,2,3]"],
    ["wrong type", JSON.stringify({ ...VALID, type: "cmd" })],
    ["six joints", JSON.stringify({ ...VALID, q: [0, 0, 0, 0, 0, 0] })],
    ["string force", JSON.stringify({ ...VALID, force_n: "3.5" })],
    ["unknown stage", JSON.stringify({ ...VALID, stage: "flying" })],
    ["non-finite t", '{"type":"state","t":Infinity}'],
  ])("rejects %s", (_label, raw) => {
    expect(parseState(raw)).toBeNull();
  });
});

describe("clampCommand", () => {
  it("passes through in-range values", () => {
    const c = clampCommand(0.01, -0.015, 0.2);
    expect(c).toEqual({ type: "cmd", vx: 0.01, vy: -0.015, wz: 0.2 });
  });

  it("clamps oversized values to the limits", () => {
    const c = clampCommand(5, -99, 1e6);
    expect(c.vx).toBe(V_MAX);
    expect(c.vy).toBe(-V_MAX);
    expect(c.wz).toBe(W_MAX);
  });

  it("maps non-finite input to zero", () => {
    const c = clampCommand(NaN, Infinity, -Infinity);
    expect(c).toEqual({ type: "cmd", vx: 0, vy: 0, wz: 0 });
  });
});

describe("socketUrl", () => {
  const loc = { protocol: "http:", host: "sim.local:8000" };

  it("uses the ws query parameter when present", () => {
    expect(socketUrl("?ws=ws://other:9000/ws/teleop", loc)).toBe("ws://other:9000/ws/teleop");
  });

  it("defaults to the page host", () => {
    expect(socketUrl("", loc)).toBe("ws://sim.local:8000/ws/teleop");
  });

  it("upgrades to wss on https pages", () => {
    expect(socketUrl("", { protocol: "https:", host: "sim.local" })).toBe("wss://sim.local/ws/teleop");
  });
});
