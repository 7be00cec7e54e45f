// End-to-end operator loop against a live simulator:
//   connect -> reassemble map layers byte-identically to the server export
//   -> click six goals -> observe six acks -> mission completes
//   -> teleop keys produce clamped commands visible in the server log.
//
// Needs the python package installed (`pip install -e ..`); gated behind
// RUN_E2E=1 so plain `npm test` stays hermetic. Run: npm run test:e2e

import { ChildProcess, spawn } from "node:child_process";
import { afterAll, beforeAll, describe, expect, test } from "vitest";
import WS from "ws";

import { OperatorClient } from "../src/client.js";
import { teleopCommand } from "../src/teleop.js";
import { defaultView, screenToWorld, worldToScreen } from "../src/transform.js";

(globalThis as unknown as { WebSocket: typeof WS }).WebSocket = WS;

const PORT = 8873 + Math.floor(Math.random() * 100);
const BASE = `http://127.0.0.1:${PORT}`;
const RUN = process.env.RUN_E2E === "1";

let server: ChildProcess | null = null;

async function waitForServer(timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const r = await fetch(`${BASE}/status`);
      if (r.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error("server did not come up");
}

beforeAll(async () => {
  if (!RUN) return;
  server = spawn("python3", ["-m", "navsim.cli", "serve", "--port", String(PORT), "--rtf", "0"], {
    cwd: "..",
    stdio: ["ignore", "pipe", "pipe"],
  });
  server.stderr?.on("data", (d: Buffer) => {
    const line = d.toString().trim();
    if (line) console.error("[serve]", line);
  });
  await waitForServer();
}, 60_000);

afterAll(() => {
  server?.kill("SIGTERM");
});

describe.runIf(RUN)("operator loop", () => {
  test("map reassembly, six goal clicks, mission success, clamped teleop", async () => {
    const events: Record<string, unknown>[] = [];
    const client = new OperatorClient({ onEvent: (e) => events.push(e) });
    await client.connect(`ws://127.0.0.1:${PORT}/ws`, ["telemetry", "map"], true);

    // hello carries the world bounds for the view transform
    const started = Date.now();
    while (!client.hello && Date.now() - started < 10_000) {
      await new Promise((r) => setTimeout(r, 50));
    }
    expect(client.hello).not.toBeNull();
    const bounds = client.hello!.world_bounds;

    // let the sensor sweep build some map; pause the sim so the live grid
    // freezes, drain the remaining deltas, then compare the reassembly
    // byte-for-byte against the server export
    while (client.map.nx === 0) {
      await new Promise((r) => setTimeout(r, 100));
    }
    await new Promise((r) => setTimeout(r, 1500));
    const pauseAck = await client.command({ kind: "pause", value: true });
    expect(pauseAck.ok).toBe(true);
    let matched = false;
    for (let attempt = 0; attempt < 20 && !matched; attempt++) {
      await new Promise((r) => setTimeout(r, 600)); // one map period
      const res = await fetch(`${BASE}/map/grid.bin`);
      const want = Buffer.from(await res.arrayBuffer());
      const got = Buffer.from(client.map.toBytes());
      matched = want.equals(got);
    }
    expect(matched).toBe(true);
    const resumeAck = await client.command({ kind: "pause", value: false });
    expect(resumeAck.ok).toBe(true);

    // six goal clicks through the screen transform, like the canvas does
    const view = defaultView(720, 720, bounds);
    const waypoints: [number, number][] = [
      [-3.5, -4.5], [3.5, -3.0], [7.5, 0.5], [3.5, 4.5], [-3.5, 6.5], [-8.0, 0.0],
    ];
    let acks = 0;
    for (const [wx, wy] of waypoints) {
      const [sx, sy] = worldToScreen(view, wx, wy);
      const [cx, cy] = screenToWorld(view, Math.round(sx), Math.round(sy));
      expect(Math.hypot(cx - wx, cy - wy)).toBeLessThan(0.1); // sub-pixel click error
      const res = await client.command({ kind: "set_goal", x: cx, y: cy });
      expect(res.ok).toBe(true);
      acks += 1;
    }
    expect(acks).toBe(6);

    // wait for the mission verdict (free-running sim, ~1x real time here)
    const deadline = Date.now() + 200_000;
    let complete = false;
    while (Date.now() < deadline) {
      const tel = client.lastTelemetry;
      if (tel && tel.goals_reached === 6 && tel.mission_complete) {
        complete = true;
        break;
      }
      await new Promise((r) => setTimeout(r, 500));
    }
    expect(complete).toBe(true);
    const reached = events.filter((e) => e.event === "goal_reached");
    expect(reached.length).toBeGreaterThanOrEqual(6);

    // teleop: an over-limit key burst must be clamped server-side and the
    // clamped command must show in the server log
    await client.command({ kind: "mode", mode: "manual" });
    const keyCmd = teleopCommand({ w: true, d: true }, 2.0); // over the 1 m/s limit
    const ack = await client.command(keyCmd);
    expect(ack.ok).toBe(true);
    expect((ack.payload as { note?: string }).note).toMatch(/clamped/);
    const cmds = (await (await fetch(`${BASE}/commands`)).json()) as Record<string, unknown>[];
    const teleops = cmds.filter((c) => c.kind === "teleop");
    expect(teleops.length).toBeGreaterThan(0);
    const v = teleops[teleops.length - 1].v as number[];
    expect(Math.hypot(v[0], v[1], v[2])).toBeLessThanOrEqual(1.0 + 1e-9);

    client.close();
  }, 240_000);
});
