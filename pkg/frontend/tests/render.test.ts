import { describe, expect, it } from "vitest";

import { pathPoints } from "../src/charts.js";
import { Camera, project, rotateByQuat } from "../src/render3d.js";

describe("rotateByQuat", () => {
  it("identity quaternion leaves vectors alone", () => {
    expect(rotateByQuat([1, 0, 0, 0], [0.1, -0.2, 0.3])).toEqual([0.1, -0.2, 0.3]);
  });

  it("90 deg about z maps x to y", () => {
    const s = Math.SQRT1_2;
    const out = rotateByQuat([s, 0, 0, s], [1, 0, 0]);
    expect(out[0]).toBeCloseTo(0, 12);
    expect(out[1]).toBeCloseTo(1, 12);
    expect(out[2]).toBeCloseTo(0, 12);
  });

  it("90 deg about x maps z to -y", () => {
    const s = Math.SQRT1_2;
    const out = rotateByQuat([s, s, 0, 0], [0, 0, 1]);
    expect(out[1]).toBeCloseTo(-1, 12);
  });
});

describe("project", () => {
  const cam: Camera = { yaw: 0.7, pitch: 0.4, dist: 0.5, target: [0.1, -0.2, 0.05] };

  it("puts the camera target at the canvas center at its distance", () => {
    const s = project(cam.target, cam, 800, 600);
    expect(s).not.toBeNull();
    expect(s![0]).toBeCloseTo(400, 9);
    expect(s![1]).toBeCloseTo(300, 9);
    expect(s![2]).toBeCloseTo(0.5, 12);
  });

  it("culls points behind the camera", () => {
    const behind: [number, number, number] = [
      cam.target[0] + Math.cos(cam.pitch) * Math.cos(cam.yaw),
      cam.target[1] + Math.cos(cam.pitch) * Math.sin(cam.yaw),
      cam.target[2] + Math.sin(cam.pitch),
    ];
    expect(project(behind, cam, 800, 600)).toBeNull();
  });
});

describe("pathPoints", () => {
  it("pins the newest sample to the right edge and stays in bounds", () => {
    const pts = pathPoints([1, 2, 3], 100, 50, 0, 10, 11);
    expect(pts).toHaveLength(3);
    const last = pts[2]!;
    expect(last[0]).toBe(100);
    for (const p of pts) {
      expect(p![0]).toBeGreaterThanOrEqual(0);
      expect(p![1]).toBeGreaterThanOrEqual(0);
      expect(p![1]).toBeLessThanOrEqual(50);
    }
  });

  it("maps min to the bottom and max to the top", () => {
    const pts = pathPoints([0, 10], 100, 50, 0, 10, 2);
    expect(pts[0]![1]).toBe(50);
    expect(pts[1]![1]).toBe(0);
  });

  it("turns NaN samples into gaps and clamps out-of-range values", () => {
    const pts = pathPoints([NaN, 99], 100, 50, 0, 10, 2);
    expect(pts[0]).toBeNull();
    expect(pts[1]![1]).toBe(0);
  });

  it("handles an empty series", () => {
    expect(pathPoints([], 100, 50, 0, 1, 600)).toEqual([]);
  });
});
