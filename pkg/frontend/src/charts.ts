/** Strip charts on a 2-D canvas: fixed y-range, the rolling window slides so
 * the newest sample sits at the right edge; NaN samples break the line. */

export interface ChartSpec {
  min: number;
  max: number;
  refline?: number;
  color: string;
  label: string;
  unit: string;
}

/** Screen-space polyline for a rolling series; null entries are gaps. */
export function pathPoints(
  values: readonly number[],
  width: number,
  height: number,
  min: number,
  max: number,
  capacity: number,
): Array<[number, number] | null> {
  const out: Array<[number, number] | null> = [];
  const n = values.length;
  if (n === 0) return out;
  const dx = capacity > 1 ? width / (capacity - 1) : 0;
  for (let i = 0; i < n; i++) {
    const v = values[i];
    if (v === undefined || !Number.isFinite(v)) {
      out.push(null);
      continue;
    }
    const clamped = Math.min(max, Math.max(min, v));
    const y = height - ((clamped - min) / (max - min)) * height;
    out.push([width - (n - 1 - i) * dx, y]);
  }
  return out;
}

export class StripChart {
  constructor(
    private canvas: HTMLCanvasElement,
    private spec: ChartSpec,
    private capacity: number,
  ) {}

  draw(values: readonly number[]): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const w = this.canvas.width;
    const h = this.canvas.height;
    ctx.fillStyle = "#10141a";
    ctx.fillRect(0, 0, w, h);

    if (this.spec.refline !== undefined) {
      const y = h - ((this.spec.refline - this.spec.min) / (this.spec.max - this.spec.min)) * h;
      ctx.strokeStyle = "#39455a";
      ctx.setLineDash([4, 4]);
      ctx.beginPath();
      ctx.moveTo(0, y);
      ctx.lineTo(w, y);
      ctx.stroke();
      ctx.setLineDash([]);
    }

    ctx.strokeStyle = this.spec.color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    let pen = false;
    for (const p of pathPoints(values, w, h, this.spec.min, this.spec.max, this.capacity)) {
      if (!p) {
        pen = false;
        continue;
      }
      if (pen) ctx.lineTo(p[0], p[1]);
      else ctx.moveTo(p[0], p[1]);
      pen = true;
    }
    ctx.stroke();

    const lastFinite = [...values].reverse().find((v) => Number.isFinite(v));
    ctx.fillStyle = "#c6cedb";
    ctx.font = "12px system-ui, sans-serif";
    const text =
      lastFinite === undefined
        ? `${this.spec.label}: —`
        : `${this.spec.label}: ${lastFinite.toFixed(2)} ${this.spec.unit}`;
    ctx.fillText(text, 8, 16);
  }
}
