// Wire types for the navsim operator protocol (docs/protocol.md, version 1).

export const PROTOCOL_VERSION = 1;
export const VOXEL_MAGIC = 0x3153564e; // "NVS1" little-endian

export interface Envelope<T = unknown> {
  v: number;
  seq: number;
  type: string;
  t_sim: number;
  payload: T;
}

export interface HelloPayload {
  protocol: number;
  session: number;
  role: string;
  world_bounds: [number, number, number, number]; // x_min, x_max, y_min, y_max
  config: {
    speed_limit: number;
    voxel_size: number;
    map_dims: number[];
    inflation_radius: number;
  };
}

export interface TelemetryPayload {
  p: [number, number, number];
  q: [number, number, number, number];
  v: [number, number, number];
  est_p: [number, number, number];
  est_q: [number, number, number, number];
  goal: [number, number] | null;
  mode: string;
  paused: boolean;
  goals_reached: number;
  goals_total: number;
  mission_complete: boolean;
}

export interface MapKeyframePayload {
  shape: [number, number];
  origin: [number, number];
  cell: number;
  version: number;
  data: string; // base64 int8 cells, x-major
}

export interface MapDeltaPayload {
  version: number;
  x0: number;
  y0: number;
  w: number;
  h: number;
  data: string; // base64 int8 sub-rectangle
}

export interface AckPayload {
  cmd_seq: number;
  applied_t: number;
  note?: string;
}

export interface NackPayload {
  cmd_seq: number;
  reason: string;
  detail?: string;
  suggestion?: [number, number] | null;
}

export interface PathPayload {
  kind: string;
  waypoints: [number, number][];
}

export type CommandPayload =
  | { kind: "set_goal"; x: number; y: number }
  | { kind: "teleop"; vx: number; vy: number; vz: number; yaw_rate: number }
  | { kind: "mode"; mode: "manual" | "auto" }
  | { kind: "pause"; value: boolean }
  | { kind: "reset"; seed: number };

export function parseEnvelope(text: string): Envelope {
  const msg = JSON.parse(text) as Envelope;
  if (msg.v !== PROTOCOL_VERSION) {
    throw new Error(`protocol version mismatch: got ${msg.v}, want ${PROTOCOL_VERSION}`);
  }
  return msg;
}

export function makeEnvelope(type: string, payload: unknown, seq: number): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, seq, type, t_sim: 0, payload });
}

/** Decode a binary voxel frame: NVS1 magic, uint32 count, count*3 float32 LE. */
export function parseVoxelFrame(buf: ArrayBuffer): Float32Array {
  const view = new DataView(buf);
  if (buf.byteLength < 8 || view.getUint32(0, true) !== VOXEL_MAGIC) {
    throw new Error("not a voxel frame (bad magic)");
  }
  const count = view.getUint32(4, true);
  if (buf.byteLength < 8 + count * 12) {
    throw new Error(`voxel frame truncated: ${buf.byteLength} bytes for ${count} voxels`);
  }
  return new Float32Array(buf.slice(8, 8 + count * 12));
}

/** Base64 -> Int8Array without relying on Buffer (works in browser and node). */
export function decodeBase64(data: string): Int8Array {
  if (typeof atob === "function") {
    const bin = atob(data);
    const out = new Int8Array(bin.length);
    for (let i = 0; i < bin.length; i++) {
      out[i] = (bin.charCodeAt(i) << 24) >> 24;
    }
    return out;
  }
  // node fallback
  const buf = globalThis.Buffer.from(data, "base64");
  return new Int8Array(buf.buffer, buf.byteOffset, buf.byteLength);
}
