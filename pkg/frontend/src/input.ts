/** Keyboard (WASD slide, QE axial rotation) and gamepad state folded into one
 * raw command. Values here are pre-clamp; the session clamps once more at the
 * wire boundary. */

import { V_MAX, W_MAX } from "./protocol.js";

const DEADZONE = 0.08;

export class InputTracker {
  private held = new Set<string>();
  private pad = { x: 0, y: 0, rz: 0 };

  keyDown(key: string): void {
    this.held.add(key.toLowerCase());
  }

  keyUp(key: string): void {
    this.held.delete(key.toLowerCase());
  }

  /** Drop all held keys (window blur would otherwise leave them stuck). */
  clearKeys(): void {
    this.held.clear();
  }

  /** Stick axes in [-1, 1]: ax0 right+, ax1 down+, ax2 axial twist. */
  setGamepadAxes(ax0: number, ax1: number, ax2: number): void {
    const dz = (v: number) => (!Number.isFinite(v) || Math.abs(v) < DEADZONE ? 0 : v);
    this.pad = { x: dz(ax0), y: dz(ax1), rz: dz(ax2) };
  }

  command(): { vx: number; vy: number; wz: number } {
    const key = (k: string) => (this.held.has(k) ? 1 : 0);
    return {
      vx: (key("d") - key("a")) * V_MAX + this.pad.x * V_MAX,
      vy: (key("w") - key("s")) * V_MAX - this.pad.y * V_MAX,
      wz: (key("q") - key("e")) * W_MAX - this.pad.rz * W_MAX,
    };
  }

  idle(): boolean {
    const c = this.command();
    return c.vx === 0 && c.vy === 0 && c.wz === 0;
  }
}
