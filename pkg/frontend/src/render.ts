// Canvas rendering of the top-down operator view: one active base layer
// (occupancy / esdf-style shading / voxel points), then overlays (traveled
// path, global path, goal markers, vehicle glyph) and a stale-data badge.

import { MapStore } from "./mapStore.js";
import { esdfRGBA, occupancyRGBA, OCCUPIED } from "./palette.js";
import { ViewState, worldToScreen } from "./transform.js";

export type BaseLayer = "occupancy" | "esdf" | "voxels-3d";

export interface Overlays {
  traveled: boolean;
  globalPath: boolean;
  localWaypoint: boolean;
  goals: boolean;
}

export interface GoalMarker {
  x: number;
  y: number;
  state: "pending" | "acked" | "rejected";
}

export interface Scene {
  view: ViewState;
  layer: BaseLayer;
  overlays: Overlays;
  map: MapStore;
  voxels: Float32Array; // flat xyz triples
  traveled: [number, number][];
  globalPath: [number, number][];
  goals: GoalMarker[];
  vehicle: { x: number; y: number; yaw: number } | null;
  staleSec: number; // seconds since the last telemetry frame
}

/** Cheap screen-space clearance shading used for the esdf layer: distance
 * (in cells) to the nearest occupied cell, computed with two sweeps. */
export function clearanceField(map: MapStore): Float32Array {
  const { nx, ny } = map;
  const big = 1e9;
  const d = new Float32Array(nx * ny).fill(big);
  for (let i = 0; i < nx; i++) {
    for (let j = 0; j < ny; j++) {
      if (map.cellAt(i, j) === OCCUPIED) d[i * ny + j] = 0;
    }
  }
  const relax = (i: number, j: number, di: number, dj: number, w: number) => {
    const a = i * ny + j;
    const b = (i + di) * ny + (j + dj);
    if (d[b] + w < d[a]) d[a] = d[b] + w;
  };
  const s2 = Math.SQRT2;
  for (let i = 0; i < nx; i++) {
    for (let j = 0; j < ny; j++) {
      if (i > 0) relax(i, j, -1, 0, 1);
      if (j > 0) relax(i, j, 0, -1, 1);
      if (i > 0 && j > 0) relax(i, j, -1, -1, s2);
      if (i > 0 && j < ny - 1) relax(i, j, -1, 1, s2);
    }
  }
  for (let i = nx - 1; i >= 0; i--) {
    for (let j = ny - 1; j >= 0; j--) {
      if (i < nx - 1) relax(i, j, 1, 0, 1);
      if (j < ny - 1) relax(i, j, 0, 1, 1);
      if (i < nx - 1 && j < ny - 1) relax(i, j, 1, 1, s2);
      if (i < nx - 1 && j > 0) relax(i, j, 1, -1, s2);
    }
  }
  return d;
}

export function renderScene(ctx: CanvasRenderingContext2D, scene: Scene): void {
  const { view } = scene;
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, view.canvasW, view.canvasH);

  if (scene.map.nx > 0 && scene.layer !== "voxels-3d") {
    drawGrid(ctx, scene);
  }
  if (scene.layer === "voxels-3d") {
    drawVoxels(ctx, scene);
  }
  if (scene.overlays.traveled && scene.traveled.length > 1) {
    drawPolyline(ctx, view, scene.traveled, "#4f9dff", 2);
  }
  if (scene.overlays.globalPath && scene.globalPath.length > 1) {
    drawPolyline(ctx, view, scene.globalPath, "#ff5c5c", 2);
  }
  if (scene.overlays.goals) {
    for (const g of scene.goals) drawGoal(ctx, view, g);
  }
  if (scene.vehicle) {
    drawVehicle(ctx, view, scene.vehicle);
  }
  if (scene.staleSec > 1.0) {
    ctx.fillStyle = "#e05050";
    ctx.font = "bold 13px monospace";
    ctx.fillText(`STALE ${scene.staleSec.toFixed(1)} s`, 10, 18);
  }
}

function drawGrid(ctx: CanvasRenderingContext2D, scene: Scene): void {
  const { map, view } = scene;
  const img = ctx.createImageData(map.nx, map.ny);
  let clear: Float32Array | null = null;
  let dMax = 1;
  if (scene.layer === "esdf") {
    clear = clearanceField(map);
    for (let k = 0; k < clear.length; k++) {
      if (clear[k] < 1e8 && clear[k] > dMax) dMax = clear[k];
    }
  }
  for (let i = 0; i < map.nx; i++) {
    for (let j = 0; j < map.ny; j++) {
      // image rows run top-to-bottom: flip j so +y is up
      const px = (map.ny - 1 - j) * map.nx + i;
      let rgba: [number, number, number, number];
      if (scene.layer === "esdf" && clear) {
        const c = map.cellAt(i, j);
        const d = c === OCCUPIED ? -1 : clear[i * map.ny + j];
        rgba = esdfRGBA(d * map.cellSize, dMax * map.cellSize);
      } else {
        rgba = occupancyRGBA(map.cellAt(i, j));
      }
      img.data.set(rgba, px * 4);
    }
  }
  const off = offscreen(map.nx, map.ny);
  off.getContext("2d")!.putImageData(img, 0, 0);
  const [sx0, sy0] = worldToScreen(view, map.originX, map.originY + map.ny * map.cellSize);
  const wPx = map.nx * map.cellSize * view.scale;
  const hPx = map.ny * map.cellSize * view.scale;
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, sx0, sy0, wPx, hPx);
}

function offscreen(w: number, h: number): HTMLCanvasElement {
  const c = document.createElement("canvas");
  c.width = w;
  c.height = h;
  return c;
}

function drawVoxels(ctx: CanvasRenderingContext2D, scene: Scene): void {
  // simple point-sprite view: brightness by height
  const v = scene.voxels;
  let zMax = 0.5;
  for (let k = 2; k < v.length; k += 3) if (v[k] > zMax) zMax = v[k];
  const r = Math.max(scene.map.cellSize * scene.view.scale * 0.45, 1);
  for (let k = 0; k + 2 < v.length; k += 3) {
    const [sx, sy] = worldToScreen(scene.view, v[k], v[k + 1]);
    const shade = 80 + Math.round(150 * (v[k + 2] / zMax));
    ctx.fillStyle = `rgb(${shade},${shade - 30},${255 - shade / 2})`;
    ctx.fillRect(sx - r, sy - r, 2 * r, 2 * r);
  }
}

function drawPolyline(ctx: CanvasRenderingContext2D, view: ViewState, pts: [number, number][],
                      color: string, width: number): void {
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.beginPath();
  pts.forEach(([x, y], i) => {
    const [sx, sy] = worldToScreen(view, x, y);
    if (i === 0) ctx.moveTo(sx, sy);
    else ctx.lineTo(sx, sy);
  });
  ctx.stroke();
}

function drawGoal(ctx: CanvasRenderingContext2D, view: ViewState, g: GoalMarker): void {
  const [sx, sy] = worldToScreen(view, g.x, g.y);
  ctx.strokeStyle = g.state === "acked" ? "#ffffff" : g.state === "pending" ? "#ffd34d" : "#e05050";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.arc(sx, sy, 6, 0, 2 * Math.PI);
  ctx.stroke();
  if (g.state === "acked") {
    ctx.fillStyle = "#ffffff";
    ctx.beginPath();
    ctx.arc(sx, sy, 2.5, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function drawVehicle(ctx: CanvasRenderingContext2D, view: ViewState,
                     v: { x: number; y: number; yaw: number }): void {
  const [sx, sy] = worldToScreen(view, v.x, v.y);
  const r = 8;
  ctx.save();
  ctx.translate(sx, sy);
  ctx.rotate(-v.yaw);
  ctx.fillStyle = "#49e079";
  ctx.beginPath();
  ctx.moveTo(r, 0);
  ctx.lineTo(-r * 0.6, r * 0.55);
  ctx.lineTo(-r * 0.6, -r * 0.55);
  ctx.closePath();
  ctx.fill();
  ctx.restore();
}
