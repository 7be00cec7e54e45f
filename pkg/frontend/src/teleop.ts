// Keyboard teleop: held keys sampled at a fixed rate into velocity
// commands. WASD planar, R/F vertical, Q/E yaw; all releases -> zero
// command. Combined directions are normalized so the magnitude never
// exceeds the speed limit.

import { CommandPayload } from "./protocol.js";

export interface KeyState {
  w?: boolean;
  a?: boolean;
  s?: boolean;
  d?: boolean;
  r?: boolean;
  f?: boolean;
  q?: boolean;
  e?: boolean;
}

export const TELEOP_HZ = 20;

export function teleopCommand(keys: KeyState, speedLimit: number, yawRateLimit = 0.9): CommandPayload {
  let vx = (keys.w ? 1 : 0) - (keys.s ? 1 : 0);
  let vy = (keys.a ? 1 : 0) - (keys.d ? 1 : 0);
  let vz = (keys.r ? 1 : 0) - (keys.f ? 1 : 0);
  const yawRate = ((keys.q ? 1 : 0) - (keys.e ? 1 : 0)) * yawRateLimit;
  const norm = Math.hypot(vx, vy, vz);
  if (norm > 0) {
    const s = speedLimit / norm;
    vx *= s;
    vy *= s;
    vz *= s;
  }
  return { kind: "teleop", vx, vy, vz, yaw_rate: yawRate };
}

export class TeleopLoop {
  private keys: KeyState = {};
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private send: (cmd: CommandPayload) => void,
    private speedLimit: number,
  ) {}

  setKey(key: string, down: boolean): void {
    const k = key.toLowerCase();
    if (["w", "a", "s", "d", "r", "f", "q", "e"].includes(k)) {
      (this.keys as Record<string, boolean>)[k] = down;
    }
  }

  start(): void {
    if (this.timer === null) {
      this.timer = setInterval(() => this.send(teleopCommand(this.keys, this.speedLimit)), 1000 / TELEOP_HZ);
    }
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
      this.send({ kind: "teleop", vx: 0, vy: 0, vz: 0, yaw_rate: 0 });
    }
  }
}
