/** Page wiring: connect the session to the DOM, poll inputs, and redraw at
 * display rate. The simulator is the single source of truth — this file only
 * forwards commands and draws whatever the state stream says. */

import { socketUrl } from "./protocol.js";
import { Session } from "./session.js";
import { InputTracker } from "./input.js";
import { Camera, drawScene } from "./render3d.js";
import { StripChart } from "./charts.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const session = new Session(socketUrl(location.search, location));
const input = new InputTracker();
session.input = () => input.command();

window.addEventListener("keydown", (e) => {
  if (e.target instanceof HTMLInputElement) return;
  input.keyDown(e.key);
});
window.addEventListener("keyup", (e) => input.keyUp(e.key));
window.addEventListener("blur", () => input.clearKeys());

for (const name of ["land", "retract", "pause", "resume"] as const) {
  el<HTMLButtonElement>(`btn-${name}`).addEventListener("click", () => session.action(name));
}
el<HTMLButtonElement>("btn-tune").addEventListener("click", () => {
  const force = parseFloat(el<HTMLInputElement>("tune-force").value);
  const kp = parseFloat(el<HTMLInputElement>("tune-kp").value);
  if (Number.isFinite(force)) session.tune("force.f_desired", force);
  if (Number.isFinite(kp)) session.tune("orientation.k_p", kp);
});

const scene = el<HTMLCanvasElement>("scene");
const cam: Camera = { yaw: -0.7, pitch: 0.5, dist: 0.55, target: [0, 0, 0] };
let dragging = false;
let lastX = 0;
let lastY = 0;
scene.addEventListener("mousedown", (e) => {
  dragging = true;
  lastX = e.clientX;
  lastY = e.clientY;
});
window.addEventListener("mouseup", () => (dragging = false));
window.addEventListener("mousemove", (e) => {
  if (!dragging) return;
  cam.yaw -= (e.clientX - lastX) * 0.008;
  cam.pitch = Math.min(1.5, Math.max(-0.2, cam.pitch + (e.clientY - lastY) * 0.008));
  lastX = e.clientX;
  lastY = e.clientY;
});
scene.addEventListener("wheel", (e) => {
  e.preventDefault();
  cam.dist = Math.min(2.0, Math.max(0.15, cam.dist * (1 + e.deltaY * 0.001)));
});

const forceChart = new StripChart(
  el<HTMLCanvasElement>("chart-force"),
  { min: 0, max: 6, refline: 3.5, color: "#4caf7d", label: "force", unit: "N" },
  600,
);
const errChart = new StripChart(
  el<HTMLCanvasElement>("chart-err"),
  { min: 0, max: 30, refline: 5, color: "#d66a6a", label: "alignment error", unit: "deg" },
  600,
);

const banner = el<HTMLDivElement>("banner");
const stagePill = el<HTMLSpanElement>("stage");
const readout = el<HTMLDivElement>("readout");

let groundZ: number | null = null;

function pollGamepad(): void {
  const pads = navigator.getGamepads ? navigator.getGamepads() : [];
  for (const pad of pads) {
    if (!pad) continue;
    const ax = pad.axes;
    input.setGamepadAxes(ax[0] ?? 0, ax[1] ?? 0, ax[2] ?? 0);
    return;
  }
}

function fitCanvas(c: HTMLCanvasElement): void {
  const w = c.clientWidth;
  const h = c.clientHeight;
  if (c.width !== w || c.height !== h) {
    c.width = w;
    c.height = h;
  }
}

function frame(): void {
  pollGamepad();

  const s = session.latest;
  if (s && s.force_n > 0) groundZ = s.pos[2];

  banner.textContent =
    session.status === "connected"
      ? `connected · ${session.states} states` +
        (session.malformed ? ` · ${session.malformed} dropped` : "")
      : session.status;
  banner.className = session.status;

  if (s) {
    stagePill.textContent = s.stage;
    stagePill.className = s.stage;
    const err = s.err_deg === null ? "—" : `${s.err_deg.toFixed(2)}°`;
    readout.textContent =
      `t ${s.t.toFixed(2)} s · force ${s.force_n.toFixed(2)} N · error ${err}`;
  }

  fitCanvas(scene);
  drawScene(scene.getContext("2d")!, scene.width, scene.height, cam, s, session.trail, groundZ);
  fitCanvas(el<HTMLCanvasElement>("chart-force"));
  fitCanvas(el<HTMLCanvasElement>("chart-err"));
  forceChart.draw(session.force.values());
  errChart.draw(session.err.values());

  requestAnimationFrame(frame);
}

requestAnimationFrame(frame);
