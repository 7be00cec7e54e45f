import { describe, expect, test } from "vitest";

import { MapStore } from "../src/mapStore.js";
import { MapDeltaPayload, MapKeyframePayload } from "../src/protocol.js";

function b64(cells: Int8Array): string {
  return Buffer.from(cells.buffer, cells.byteOffset, cells.length).toString("base64");
}

function keyframe(nx: number, ny: number, fill: number, version = 1): MapKeyframePayload {
  const cells = new Int8Array(nx * ny).fill(fill);
  return { shape: [nx, ny], origin: [-1, -1], cell: 0.2, version, data: b64(cells) };
}

describe("map reassembly", () => {
  test("keyframe populates the grid", () => {
    const store = new MapStore();
    store.applyKeyframe(keyframe(4, 3, -1));
    expect(store.nx).toBe(4);
    expect(store.ny).toBe(3);
    expect(Array.from(store.cells)).toEqual(new Array(12).fill(-1));
  });

  test("delta patches a sub-rectangle", () => {
    const store = new MapStore();
    store.applyKeyframe(keyframe(5, 5, -1, 3));
    const sub = new Int8Array([1, 0, 0, 1]); // 2x2, x-major
    const delta: MapDeltaPayload = { version: 4, x0: 1, y0: 2, w: 2, h: 2, data: b64(sub) };
    store.applyDelta(delta);
    expect(store.cellAt(1, 2)).toBe(1);
    expect(store.cellAt(1, 3)).toBe(0);
    expect(store.cellAt(2, 2)).toBe(0);
    expect(store.cellAt(2, 3)).toBe(1);
    expect(store.cellAt(0, 0)).toBe(-1);
    expect(store.version).toBe(4);
  });

  test("delta before keyframe flags resync", () => {
    const store = new MapStore();
    store.applyDelta({ version: 1, x0: 0, y0: 0, w: 1, h: 1, data: b64(new Int8Array([1])) });
    expect(store.needsResync).toBe(true);
  });

  test("stale delta flags resync and leaves cells untouched", () => {
    const store = new MapStore();
    store.applyKeyframe(keyframe(3, 3, 0, 10));
    store.applyDelta({ version: 4, x0: 0, y0: 0, w: 1, h: 1, data: b64(new Int8Array([1])) });
    expect(store.needsResync).toBe(true);
    expect(store.cellAt(0, 0)).toBe(0);
  });

  test("reconnect keyframe rebuilds the identical grid", () => {
    const a = new MapStore();
    const b = new MapStore();
    a.applyKeyframe(keyframe(6, 4, -1, 1));
    a.applyDelta({ version: 2, x0: 2, y0: 1, w: 1, h: 2, data: b64(new Int8Array([1, 0])) });
    // a second client joining later gets one keyframe with the same content
    const kf: MapKeyframePayload = {
      shape: [6, 4], origin: [-1, -1], cell: 0.2, version: 2, data: b64(a.cells),
    };
    b.applyKeyframe(kf);
    expect(Buffer.from(b.toBytes()).equals(Buffer.from(a.toBytes()))).toBe(true);
  });
});
