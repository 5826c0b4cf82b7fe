/** Minimal 3-D line rendering on a 2-D canvas: orbit camera, perspective
 * projection, and the probe/normal/trail scene. Everything drawn is taken
 * straight from the latest state message — no physics is recomputed here. */

import { StateMsg } from "./protocol.js";

export type Vec3 = [number, number, number];

export interface Camera {
  yaw: number; // radians about world z
  pitch: number; // elevation
  dist: number; // meters from target
  target: Vec3;
}

/** Rotate v by the wxyz quaternion q (unit assumed). */
export function rotateByQuat(q: [number, number, number, number], v: Vec3): Vec3 {
  const [w, x, y, z] = q;
  const tx = 2 * (y * v[2] - z * v[1]);
  const ty = 2 * (z * v[0] - x * v[2]);
  const tz = 2 * (x * v[1] - y * v[0]);
  return [
    v[0] + w * tx + (y * tz - z * ty),
    v[1] + w * ty + (z * tx - x * tz),
    v[2] + w * tz + (x * ty - y * tx),
  ];
}

/** Perspective-project a world point; null when behind the camera. */
export function project(
  p: Vec3,
  cam: Camera,
  width: number,
  height: number,
): [number, number, number] | null {
  const cy = Math.cos(cam.yaw);
  const sy = Math.sin(cam.yaw);
  const cp = Math.cos(cam.pitch);
  const sp = Math.sin(cam.pitch);
  const eye: Vec3 = [
    cam.target[0] + cam.dist * cp * cy,
    cam.target[1] + cam.dist * cp * sy,
    cam.target[2] + cam.dist * sp,
  ];
  const right: Vec3 = [-sy, cy, 0];
  const up: Vec3 = [-sp * cy, -sp * sy, cp];
  const fwd: Vec3 = [-cp * cy, -cp * sy, -sp];
  const d: Vec3 = [p[0] - eye[0], p[1] - eye[1], p[2] - eye[2]];
  const x = d[0] * right[0] + d[1] * right[1] + d[2] * right[2];
  const y = d[0] * up[0] + d[1] * up[1] + d[2] * up[2];
  const depth = d[0] * fwd[0] + d[1] * fwd[1] + d[2] * fwd[2];
  if (depth < 0.01) return null;
  const focal = 1.1 * Math.min(width, height);
  return [width / 2 + (focal * x) / depth, height / 2 - (focal * y) / depth, depth];
}

type Ctx = CanvasRenderingContext2D;

function stroke(ctx: Ctx, cam: Camera, w: number, h: number, pts: Vec3[], color: string, lw = 1): void {
  ctx.strokeStyle = color;
  ctx.lineWidth = lw;
  ctx.beginPath();
  let pen = false;
  for (const p of pts) {
    const s = project(p, cam, w, h);
    if (!s) {
      pen = false;
      continue;
    }
    if (pen) ctx.lineTo(s[0], s[1]);
    else ctx.moveTo(s[0], s[1]);
    pen = true;
  }
  ctx.stroke();
}

export function drawScene(
  ctx: Ctx,
  width: number,
  height: number,
  cam: Camera,
  latest: StateMsg | null,
  trail: ReadonlyArray<[number, number, number]>,
  groundZ: number | null,
): void {
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, width, height);
  if (!latest) {
    ctx.fillStyle = "#8a93a3";
    ctx.font = "14px system-ui, sans-serif";
    ctx.fillText("waiting for state stream…", 16, 28);
    return;
  }

  const tip = latest.pos;
  cam.target = [tip[0], tip[1], groundZ ?? tip[2]];

  // contact-plane grid under the probe: visual reference only
  const gz = groundZ ?? tip[2] - 0.05;
  const span = 0.15;
  const step = 0.03;
  for (let i = -5; i <= 5; i++) {
    const o = i * step;
    stroke(ctx, cam, width, height,
      [[tip[0] - span, tip[1] + o, gz], [tip[0] + span, tip[1] + o, gz]], "#242c38");
    stroke(ctx, cam, width, height,
      [[tip[0] + o, tip[1] - span, gz], [tip[0] + o, tip[1] + span, gz]], "#242c38");
  }

  // recent tip path
  if (trail.length > 1) stroke(ctx, cam, width, height, trail as Vec3[], "#3d6bd6", 1.5);

  // probe shaft along its own -z (the +z axis points at the surface)
  const axis = rotateByQuat(latest.quat, [0, 0, 1]);
  const back: Vec3 = [tip[0] - 0.12 * axis[0], tip[1] - 0.12 * axis[1], tip[2] - 0.12 * axis[2]];
  const stageColor = latest.stage === "scanning" ? "#4caf7d" : "#e0a437";
  stroke(ctx, cam, width, height, [back, tip], stageColor, 3);
  const s = project(tip, cam, width, height);
  if (s) {
    ctx.fillStyle = stageColor;
    ctx.beginPath();
    ctx.arc(s[0], s[1], 4, 0, 2 * Math.PI);
    ctx.fill();
  }

  // estimated surface normal (probe frame on the wire -> world for display)
  if (latest.normal) {
    const n = rotateByQuat(latest.quat, latest.normal);
    const head: Vec3 = [tip[0] + 0.06 * n[0], tip[1] + 0.06 * n[1], tip[2] + 0.06 * n[2]];
    stroke(ctx, cam, width, height, [tip, head], "#d66a6a", 2);
    const hs = project(head, cam, width, height);
    if (hs) {
      ctx.fillStyle = "#d66a6a";
      ctx.beginPath();
      ctx.arc(hs[0], hs[1], 3, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
}
