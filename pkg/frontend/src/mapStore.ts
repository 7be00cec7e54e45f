// Client-side map state: keyframe + dirty-rectangle deltas reassembled into
// a flat Int8Array. The store holds no authoritative state of its own: a
// reconnect rebuilds the identical grid from a fresh keyframe.

import { MapDeltaPayload, MapKeyframePayload, decodeBase64 } from "./protocol.js";

export class MapStore {
  cells: Int8Array = new Int8Array(0);
  nx = 0;
  ny = 0;
  originX = 0;
  originY = 0;
  cellSize = 0.2;
  version = -1;
  /** set when a delta arrived out of order; client should request resync */
  needsResync = false;

  applyKeyframe(kf: MapKeyframePayload): void {
    this.nx = kf.shape[0];
    this.ny = kf.shape[1];
    this.originX = kf.origin[0];
    this.originY = kf.origin[1];
    this.cellSize = kf.cell;
    const data = decodeBase64(kf.data);
    if (data.length !== this.nx * this.ny) {
      throw new Error(`keyframe size ${data.length} != ${this.nx}x${this.ny}`);
    }
    this.cells = data;
    this.version = kf.version;
    this.needsResync = false;
  }

  applyDelta(delta: MapDeltaPayload): void {
    if (this.cells.length === 0) {
      this.needsResync = true; // delta before any keyframe
      return;
    }
    if (delta.version < this.version) {
      this.needsResync = true; // stale/out-of-order delta: ask for a keyframe
      return;
    }
    const sub = decodeBase64(delta.data);
    if (sub.length !== delta.w * delta.h) {
      throw new Error(`delta size ${sub.length} != ${delta.w}x${delta.h}`);
    }
    // cells are x-major: cell (i, j) lives at i*ny + j
    for (let i = 0; i < delta.w; i++) {
      const dst = (delta.x0 + i) * this.ny + delta.y0;
      const src = i * delta.h;
      this.cells.set(sub.subarray(src, src + delta.h), dst);
    }
    this.version = delta.version;
  }

  cellAt(i: number, j: number): number {
    return this.cells[i * this.ny + j];
  }

  /** raw bytes, comparable against the server's /map/grid.bin export */
  toBytes(): Uint8Array {
    return new Uint8Array(this.cells.buffer.slice(0), this.cells.byteOffset, this.cells.length);
  }
}
