// Telemetry strip charts: position, velocity, attitude over a sliding
// window, plus CSV export of the buffered history.

import { TelemetryPayload } from "./protocol.js";

export interface Sample {
  t: number;
  x: number;
  y: number;
  z: number;
  vx: number;
  vy: number;
  vz: number;
  roll: number;
  pitch: number;
  yaw: number;
}

export function quatToEuler(q: [number, number, number, number]): [number, number, number] {
  const [w, x, y, z] = q;
  const roll = Math.atan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y));
  const sp = 2 * (w * y - z * x);
  const pitch = Math.asin(Math.max(-1, Math.min(1, sp)));
  const yaw = Math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z));
  return [roll, pitch, yaw];
}

export class TelemetryHistory {
  samples: Sample[] = [];

  constructor(public windowSec = 30) {}

  push(t: number, tel: TelemetryPayload): void {
    const [roll, pitch, yaw] = quatToEuler(tel.q);
    this.samples.push({
      t,
      x: tel.p[0], y: tel.p[1], z: tel.p[2],
      vx: tel.v[0], vy: tel.v[1], vz: tel.v[2],
      roll, pitch, yaw,
    });
    const cutoff = t - this.windowSec;
    while (this.samples.length > 1 && this.samples[0].t < cutoff) {
      this.samples.shift();
    }
  }

  toCSV(): string {
    const header = "t,x,y,z,vx,vy,vz,roll,pitch,yaw";
    const rows = this.samples.map((s) =>
      [s.t, s.x, s.y, s.z, s.vx, s.vy, s.vz, s.roll, s.pitch, s.yaw].map((v) => v.toPrecision(9)).join(","),
    );
    return [header, ...rows].join("\n") + "\n";
  }
}

export function parseCSV(text: string): Sample[] {
  const lines = text.trim().split("\n");
  return lines.slice(1).map((line) => {
    const [t, x, y, z, vx, vy, vz, roll, pitch, yaw] = line.split(",").map(Number);
    return { t, x, y, z, vx, vy, vz, roll, pitch, yaw };
  });
}

/** Draw one strip panel onto a canvas 2D context. */
export function drawStrip(
  ctx: CanvasRenderingContext2D,
  rect: { x: number; y: number; w: number; h: number },
  history: Sample[],
  fields: (keyof Sample)[],
  colors: string[],
  label: string,
  yRange?: [number, number],
): void {
  ctx.save();
  ctx.strokeStyle = "#456";
  ctx.strokeRect(rect.x + 0.5, rect.y + 0.5, rect.w - 1, rect.h - 1);
  ctx.fillStyle = "#9ab";
  ctx.font = "11px monospace";
  ctx.fillText(label, rect.x + 6, rect.y + 13);
  if (history.length < 2) {
    ctx.restore();
    return;
  }
  const t0 = history[0].t;
  const t1 = history[history.length - 1].t;
  let lo = Infinity;
  let hi = -Infinity;
  if (yRange) {
    [lo, hi] = yRange;
  } else {
    for (const s of history) {
      for (const f of fields) {
        const v = s[f] as number;
        if (v < lo) lo = v;
        if (v > hi) hi = v;
      }
    }
    if (hi - lo < 1e-6) {
      hi += 0.5;
      lo -= 0.5;
    }
  }
  fields.forEach((f, k) => {
    ctx.strokeStyle = colors[k];
    ctx.beginPath();
    history.forEach((s, i) => {
      const px = rect.x + ((s.t - t0) / Math.max(t1 - t0, 1e-9)) * rect.w;
      const py = rect.y + rect.h - (((s[f] as number) - lo) / (hi - lo)) * rect.h;
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
  });
  ctx.restore();
}
