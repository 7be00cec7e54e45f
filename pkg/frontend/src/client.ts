// Connection state machine: owns the WebSocket, subscription handshake,
// command sequencing with ack/nack resolution, and the incoming message
// fan-out. All mutation flows through the protocol; nothing here is
// authoritative (reconnect rebuilds every view from server messages).

import { MapStore } from "./mapStore.js";
import {
  AckPayload,
  CommandPayload,
  Envelope,
  HelloPayload,
  MapDeltaPayload,
  MapKeyframePayload,
  NackPayload,
  PathPayload,
  TelemetryPayload,
  makeEnvelope,
  parseEnvelope,
  parseVoxelFrame,
} from "./protocol.js";

export interface ClientEvents {
  onHello?: (h: HelloPayload) => void;
  onTelemetry?: (t: TelemetryPayload, tSim: number) => void;
  onPath?: (p: PathPayload) => void;
  onEvent?: (e: Record<string, unknown>) => void;
  onVoxels?: (v: Float32Array) => void;
  onMapChanged?: () => void;
  onStatus?: (s: string) => void;
}

interface PendingCommand {
  resolve: (r: { ok: boolean; payload: AckPayload | NackPayload }) => void;
}

export class OperatorClient {
  map = new MapStore();
  hello: HelloPayload | null = null;
  lastTelemetry: TelemetryPayload | null = null;
  lastTelemetryWall = 0;
  private ws: WebSocket | null = null;
  private seq = 0;
  private pending = new Map<number, PendingCommand>();

  constructor(private events: ClientEvents = {}) {}

  connect(url: string, topics: string[], asOperator: boolean): Promise<void> {
    return new Promise((resolve, reject) => {
      const ws = new WebSocket(url);
      ws.binaryType = "arraybuffer";
      this.ws = ws;
      ws.onopen = () => {
        this.sendRaw("subscribe", { topics, role: asOperator ? "operator" : undefined });
        this.events.onStatus?.("connected");
        resolve();
      };
      ws.onerror = () => {
        this.events.onStatus?.("error");
        reject(new Error(`websocket error on ${url}`));
      };
      ws.onclose = () => this.events.onStatus?.("disconnected");
      ws.onmessage = (ev: MessageEvent) => this.onMessage(ev);
    });
  }

  close(): void {
    this.ws?.close();
  }

  private sendRaw(type: string, payload: unknown): number {
    this.seq += 1;
    this.ws?.send(makeEnvelope(type, payload, this.seq));
    return this.seq;
  }

  /** Send a command; resolves with the matching ack or nack. */
  command(payload: CommandPayload): Promise<{ ok: boolean; payload: AckPayload | NackPayload }> {
    const seq = this.sendRaw("command", payload);
    return new Promise((resolve) => this.pending.set(seq, { resolve }));
  }

  private onMessage(ev: MessageEvent): void {
    if (ev.data instanceof ArrayBuffer) {
      this.events.onVoxels?.(parseVoxelFrame(ev.data));
      return;
    }
    let msg: Envelope;
    try {
      msg = parseEnvelope(ev.data as string);
    } catch (e) {
      console.error("bad frame:", e);
      return;
    }
    switch (msg.type) {
      case "hello":
        this.hello = msg.payload as HelloPayload;
        this.events.onHello?.(this.hello);
        break;
      case "telemetry":
        this.lastTelemetry = msg.payload as TelemetryPayload;
        this.lastTelemetryWall = Date.now() / 1000;
        this.events.onTelemetry?.(this.lastTelemetry, msg.t_sim);
        break;
      case "map_keyframe":
        this.map.applyKeyframe(msg.payload as MapKeyframePayload);
        this.events.onMapChanged?.();
        break;
      case "map_delta":
        this.map.applyDelta(msg.payload as MapDeltaPayload);
        this.events.onMapChanged?.();
        break;
      case "path":
        this.events.onPath?.(msg.payload as PathPayload);
        break;
      case "event":
        this.events.onEvent?.(msg.payload as Record<string, unknown>);
        break;
      case "ack":
      case "nack": {
        const payload = msg.payload as AckPayload | NackPayload;
        const waiter = this.pending.get(payload.cmd_seq);
        if (waiter) {
          this.pending.delete(payload.cmd_seq);
          waiter.resolve({ ok: msg.type === "ack", payload });
        }
        break;
      }
      default:
        break;
    }
  }

  staleSeconds(): number {
    if (this.lastTelemetryWall === 0) return Infinity;
    return Date.now() / 1000 - this.lastTelemetryWall;
  }
}
