/**
 * Session state: connection lifecycle, latest robot state, bounded plot
 * buffers, and monotone command sequencing. Everything the renderer draws
 * derives from received messages; nothing is fabricated client-side.
 */

import { InboundMessage, SceneMessage, StateMessage } from "./protocol";

export const PLOT_RING = 600;

export class RingBuffer {
  private data: number[] = [];

  push(v: number) {
    this.data.push(v);
    if (this.data.length > PLOT_RING) this.data.shift();
  }

  values(): readonly number[] {
    return this.data;
  }

  get length(): number {
    return this.data.length;
  }
}

export type ConnectionState = "connecting" | "connected" | "closed" | "error";

export class SessionModel {
  connection: ConnectionState = "connecting";
  scene: SceneMessage | null = null;
  state: StateMessage | null = null;
  previousState: StateMessage | null = null;
  lastStateAt = 0; // ms timestamp of the latest state frame
  lastError: string | null = null;
  droppedFrames = 0;
  private seq = 0;

  // plot buffers: per-goal minimum arbitration weight, inter-effector
  // distance, and left-arm tracking error
  readonly wPlot = new RingBuffer();
  readonly distancePlot = new RingBuffer();
  readonly trackErrPlot = new RingBuffer();

  nextSeq(): number {
    this.seq += 1;
    return this.seq;
  }

  handle(msg: InboundMessage, nowMs: number): void {
    switch (msg.type) {
      case "welcome":
        this.scene = msg.scene;
        this.connection = "connected";
        break;
      case "state": {
        this.previousState = this.state;
        this.state = msg;
        this.lastStateAt = nowMs;
        if (msg.w.length > 0) {
          this.wPlot.push(Math.min(...msg.w.map((pair) => Math.min(pair[0], pair[1]))));
        }
        const dx = msg.real[3] - msg.real[0];
        const dy = msg.real[4] - msg.real[1];
        const dz = msg.real[5] - msg.real[2];
        this.distancePlot.push(Math.hypot(dx, dy, dz));
        this.trackErrPlot.push(msg.track_err[0]);
        break;
      }
      case "gap":
        this.droppedFrames += msg.dropped;
        break;
      case "error":
        this.lastError = `${msg.error}${msg.detail ? `: ${msg.detail}` : ""}`;
        break;
      case "ack":
      case "pong":
        break;
    }
  }

  /** State older than a second means the viewport should gray out. */
  isStale(nowMs: number): boolean {
    return this.state !== null && nowMs - this.lastStateAt > 1000;
  }

  /**
   * Linear interpolation between the two latest states for smooth rendering
   * above the simulation tick rate.
   */
  interpolatedEffectors(nowMs: number, tickRateHz: number): number[] | null {
    if (this.state === null) return null;
    if (this.previousState === null) return this.state.real.slice();
    const periodMs = 1000 / tickRateHz;
    const alpha = Math.min(1, Math.max(0, (nowMs - this.lastStateAt) / periodMs));
    const prev = this.previousState.real;
    const cur = this.state.real;
    return cur.map((v, i) => prev[i] + alpha * (v - prev[i]));
  }
}
