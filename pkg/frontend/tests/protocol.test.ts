import { describe, expect, test } from "vitest";

import { decodeBase64, makeEnvelope, parseEnvelope, parseVoxelFrame } from "../src/protocol.js";

describe("protocol framing", () => {
  test("envelope round trip", () => {
    const text = makeEnvelope("command", { kind: "pause", value: true }, 7);
    const msg = parseEnvelope(text);
    expect(msg.type).toBe("command");
    expect(msg.seq).toBe(7);
    expect(msg.payload).toEqual({ kind: "pause", value: true });
  });

  test("version mismatch rejected", () => {
    expect(() => parseEnvelope('{"v":2,"seq":1,"type":"x","t_sim":0,"payload":{}}')).toThrow(/version/);
  });

  test("voxel frame round trip", () => {
    const pts = new Float32Array([1.1, -2.2, 0.3, 4.4, 5.5, -6.6]);
    const buf = new ArrayBuffer(8 + pts.byteLength);
    const view = new DataView(buf);
    view.setUint32(0, 0x3153564e, true);
    view.setUint32(4, 2, true);
    new Float32Array(buf, 8).set(pts);
    const out = parseVoxelFrame(buf);
    expect(Array.from(out)).toEqual(Array.from(pts));
  });

  test("voxel frame bad magic rejected", () => {
    const buf = new ArrayBuffer(8);
    expect(() => parseVoxelFrame(buf)).toThrow(/magic/);
  });

  test("base64 int8 decode matches Buffer", () => {
    const cells = new Int8Array([-1, 0, 1, -1, 127, -128]);
    const b64 = Buffer.from(cells.buffer).toString("base64");
    const out = decodeBase64(b64);
    expect(Array.from(out)).toEqual(Array.from(cells));
  });
});
