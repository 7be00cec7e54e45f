import { describe, expect, test } from "vitest";

import { defaultView, pan, screenToWorld, worldToScreen, zoom } from "../src/transform.js";

describe("view transform", () => {
  test("screen/world round trip within 0.5 px", () => {
    const view = defaultView(720, 720, [-10, 10, -10, 10]);
    for (let k = 0; k < 500; k++) {
      const sx = Math.random() * 720;
      const sy = Math.random() * 720;
      const [wx, wy] = screenToWorld(view, sx, sy);
      const [bx, by] = worldToScreen(view, wx, wy);
      expect(Math.hypot(bx - sx, by - sy)).toBeLessThan(0.5);
    }
  });

  test("world/screen round trip in meters", () => {
    const view = defaultView(720, 720, [-10, 10, -10, 10]);
    const [sx, sy] = worldToScreen(view, 3.25, -7.5);
    const [wx, wy] = screenToWorld(view, sx, sy);
    expect(wx).toBeCloseTo(3.25, 9);
    expect(wy).toBeCloseTo(-7.5, 9);
  });

  test("default view fits the bounds", () => {
    const view = defaultView(720, 720, [-10, 10, -10, 10]);
    const corners: [number, number][] = [[-10, -10], [10, 10], [-10, 10], [10, -10]];
    for (const [wx, wy] of corners) {
      const [sx, sy] = worldToScreen(view, wx, wy);
      expect(sx).toBeGreaterThanOrEqual(0);
      expect(sx).toBeLessThanOrEqual(720);
      expect(sy).toBeGreaterThanOrEqual(0);
      expect(sy).toBeLessThanOrEqual(720);
    }
  });

  test("y axis points up on screen", () => {
    const view = defaultView(720, 720, [-10, 10, -10, 10]);
    const [, syLow] = worldToScreen(view, 0, -5);
    const [, syHigh] = worldToScreen(view, 0, 5);
    expect(syHigh).toBeLessThan(syLow);
  });

  test("pan shifts the world under the cursor", () => {
    let view = defaultView(720, 720, [-10, 10, -10, 10]);
    const before = screenToWorld(view, 360, 360);
    view = pan(view, 50, 0);
    const after = screenToWorld(view, 410, 360);
    expect(after[0]).toBeCloseTo(before[0], 9);
    expect(after[1]).toBeCloseTo(before[1], 9);
  });

  test("zoom keeps the anchor point fixed", () => {
    let view = defaultView(720, 720, [-10, 10, -10, 10]);
    const anchor: [number, number] = [100, 550];
    const before = screenToWorld(view, ...anchor);
    view = zoom(view, 2.0, ...anchor);
    const after = screenToWorld(view, ...anchor);
    expect(after[0]).toBeCloseTo(before[0], 6);
    expect(after[1]).toBeCloseTo(before[1], 6);
    expect(view.scale).toBeCloseTo(2 * defaultView(720, 720, [-10, 10, -10, 10]).scale, 6);
  });
});
