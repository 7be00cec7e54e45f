// Browser bootstrap: canvas wiring, mouse click-and-fly, keyboard teleop,
// layer toggles, strip charts, CSV export.

import { OperatorClient } from "./client.js";
import { GoalMarker, BaseLayer, Scene, renderScene } from "./render.js";
import { TelemetryHistory, drawStrip } from "./plots.js";
import { TeleopLoop } from "./teleop.js";
import { defaultView, pan, screenToWorld, zoom } from "./transform.js";

const mapCanvas = document.getElementById("map") as HTMLCanvasElement;
const plotCanvas = document.getElementById("plots") as HTMLCanvasElement;
const statusEl = document.getElementById("status") as HTMLSpanElement;
const toastEl = document.getElementById("toast") as HTMLDivElement;

const history = new TelemetryHistory(30);
const traveled: [number, number][] = [];
let globalPath: [number, number][] = [];
const goals: GoalMarker[] = [];
let voxels: Float32Array = new Float32Array(0);
let layer: BaseLayer = "occupancy";
let mode: "auto" | "manual" = "auto";
let tSim = 0;

const url = `ws://${location.hostname}:${location.port || 8765}/ws`;
const client = new OperatorClient({
  onStatus: (s) => (statusEl.textContent = s),
  onHello: (h) => {
    view = defaultView(mapCanvas.width, mapCanvas.height, h.world_bounds);
  },
  onTelemetry: (tel, t) => {
    tSim = t;
    history.push(t, tel);
    const last = traveled[traveled.length - 1];
    if (!last || Math.hypot(tel.p[0] - last[0], tel.p[1] - last[1]) > 0.02) {
      traveled.push([tel.p[0], tel.p[1]]);
    }
  },
  onPath: (p) => {
    globalPath = p.waypoints;
  },
  onEvent: (e) => {
    if (e.event === "goal_reached") toast(`goal ${(e.index as number) + 1} reached`);
  },
  onVoxels: (v) => {
    voxels = v;
  },
});

let view = defaultView(mapCanvas.width, mapCanvas.height);

function toast(text: string, bad = false): void {
  toastEl.textContent = text;
  toastEl.className = bad ? "toast bad" : "toast";
  setTimeout(() => (toastEl.textContent = ""), 2500);
}

// --- mouse: click to set a goal, drag to pan, wheel to zoom ---

let dragStart: [number, number] | null = null;
let dragged = false;

mapCanvas.addEventListener("mousedown", (e) => {
  dragStart = [e.offsetX, e.offsetY];
  dragged = false;
});
mapCanvas.addEventListener("mousemove", (e) => {
  if (dragStart && (e.buttons & 1) !== 0) {
    const dx = e.offsetX - dragStart[0];
    const dy = e.offsetY - dragStart[1];
    if (Math.hypot(dx, dy) > 3) {
      view = pan(view, dx, dy);
      dragStart = [e.offsetX, e.offsetY];
      dragged = true;
    }
  }
});
mapCanvas.addEventListener("mouseup", async (e) => {
  dragStart = null;
  if (dragged || mode !== "auto") return;
  const [wx, wy] = screenToWorld(view, e.offsetX, e.offsetY);
  const b = client.hello?.world_bounds;
  if (b && (wx < b[0] || wx > b[1] || wy < b[2] || wy > b[3])) {
    toast("click outside world bounds", true);
    return;
  }
  const marker: GoalMarker = { x: wx, y: wy, state: "pending" };
  goals.push(marker);
  const res = await client.command({ kind: "set_goal", x: wx, y: wy });
  if (res.ok) {
    marker.state = "acked";
  } else {
    marker.state = "rejected";
    const nack = res.payload as { reason?: string; suggestion?: [number, number] | null };
    toast(`goal rejected: ${nack.reason}${nack.suggestion ? " (try the suggested spot)" : ""}`, true);
    if (nack.suggestion) goals.push({ x: nack.suggestion[0], y: nack.suggestion[1], state: "pending" });
  }
});
mapCanvas.addEventListener("wheel", (e) => {
  e.preventDefault();
  view = zoom(view, e.deltaY < 0 ? 1.15 : 1 / 1.15, e.offsetX, e.offsetY);
});

// --- keyboard teleop ---

const teleop = new TeleopLoop((cmd) => void client.command(cmd), 1.0);
window.addEventListener("keydown", (e) => {
  if (mode === "manual") teleop.setKey(e.key, true);
});
window.addEventListener("keyup", (e) => {
  if (mode === "manual") teleop.setKey(e.key, false);
});

// --- UI controls ---

(document.getElementById("layer") as HTMLSelectElement).addEventListener("change", (e) => {
  layer = (e.target as HTMLSelectElement).value as BaseLayer;
});
(document.getElementById("mode") as HTMLSelectElement).addEventListener("change", async (e) => {
  mode = (e.target as HTMLSelectElement).value as "auto" | "manual";
  await client.command({ kind: "mode", mode });
  if (mode === "manual") teleop.start();
  else teleop.stop();
});
(document.getElementById("csv") as HTMLButtonElement).addEventListener("click", () => {
  const blob = new Blob([history.toCSV()], { type: "text/csv" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = "telemetry.csv";
  a.click();
});

// --- render loop ---

function frame(): void {
  const tel = client.lastTelemetry;
  const scene: Scene = {
    view,
    layer,
    overlays: { traveled: true, globalPath: true, localWaypoint: true, goals: true },
    map: client.map,
    voxels,
    traveled,
    globalPath,
    goals,
    vehicle: tel
      ? {
          x: tel.p[0],
          y: tel.p[1],
          yaw: Math.atan2(
            2 * (tel.q[0] * tel.q[3] + tel.q[1] * tel.q[2]),
            1 - 2 * (tel.q[2] * tel.q[2] + tel.q[3] * tel.q[3]),
          ),
        }
      : null,
    staleSec: client.staleSeconds(),
  };
  renderScene(mapCanvas.getContext("2d")!, scene);

  const ctx = plotCanvas.getContext("2d")!;
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, plotCanvas.width, plotCanvas.height);
  const h3 = Math.floor(plotCanvas.height / 3);
  drawStrip(ctx, { x: 0, y: 0, w: plotCanvas.width, h: h3 }, history.samples,
            ["x", "y", "z"], ["#ff8d66", "#6fe08a", "#6fb7ff"], `position  t=${tSim.toFixed(1)}s`);
  drawStrip(ctx, { x: 0, y: h3, w: plotCanvas.width, h: h3 }, history.samples,
            ["vx", "vy", "vz"], ["#ff8d66", "#6fe08a", "#6fb7ff"], "velocity (+-1 m/s)", [-1.1, 1.1]);
  drawStrip(ctx, { x: 0, y: 2 * h3, w: plotCanvas.width, h: h3 }, history.samples,
            ["roll", "pitch", "yaw"], ["#ff8d66", "#6fe08a", "#6fb7ff"], "attitude");
  requestAnimationFrame(frame);
}

client
  .connect(url, ["telemetry", "map", "voxels"], true)
  .then(() => requestAnimationFrame(frame))
  .catch((e) => toast(String(e), true));
