import { describe, expect, test } from "vitest";

import { teleopCommand } from "../src/teleop.js";

describe("keyboard teleop", () => {
  test("no keys gives the zero command", () => {
    const cmd = teleopCommand({}, 1.0);
    expect(cmd).toEqual({ kind: "teleop", vx: 0, vy: 0, vz: 0, yaw_rate: 0 });
  });

  test("W held commands +x at the limit", () => {
    const cmd = teleopCommand({ w: true }, 1.0);
    expect(cmd.kind).toBe("teleop");
    if (cmd.kind === "teleop") {
      expect(cmd.vx).toBeCloseTo(1.0, 12);
      expect(cmd.vy).toBe(0);
      expect(cmd.vz).toBe(0);
    }
  });

  test("W+D diagonal is normalized to the limit", () => {
    const cmd = teleopCommand({ w: true, d: true }, 1.0);
    if (cmd.kind === "teleop") {
      const mag = Math.hypot(cmd.vx, cmd.vy, cmd.vz);
      expect(mag).toBeCloseTo(1.0, 12);
      expect(cmd.vx).toBeCloseTo(Math.SQRT1_2, 12);
      expect(cmd.vy).toBeCloseTo(-Math.SQRT1_2, 12);
    }
  });

  test("vertical and yaw keys", () => {
    const up = teleopCommand({ r: true }, 0.5);
    if (up.kind === "teleop") expect(up.vz).toBeCloseTo(0.5, 12);
    const spin = teleopCommand({ q: true }, 1.0, 0.9);
    if (spin.kind === "teleop") {
      expect(spin.yaw_rate).toBeCloseTo(0.9, 12);
      expect(Math.hypot(spin.vx, spin.vy, spin.vz)).toBe(0);
    }
  });

  test("opposing keys cancel", () => {
    const cmd = teleopCommand({ w: true, s: true, a: true, d: true }, 1.0);
    if (cmd.kind === "teleop") {
      expect(Math.hypot(cmd.vx, cmd.vy, cmd.vz)).toBe(0);
    }
  });

  test("magnitude never exceeds the limit for any key combination", () => {
    const keys = ["w", "a", "s", "d", "r", "f"] as const;
    for (let mask = 0; mask < 64; mask++) {
      const state: Record<string, boolean> = {};
      keys.forEach((k, i) => {
        if (mask & (1 << i)) state[k] = true;
      });
      const cmd = teleopCommand(state, 1.0);
      if (cmd.kind === "teleop") {
        expect(Math.hypot(cmd.vx, cmd.vy, cmd.vz)).toBeLessThanOrEqual(1.0 + 1e-12);
      }
    }
  });
});
