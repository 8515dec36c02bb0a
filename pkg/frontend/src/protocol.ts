/**
 * Wire protocol v1: length-prefixed JSON text frames.
 * Frame = ASCII decimal payload length + "\n" + UTF-8 JSON payload.
 */

export const PROTOCOL_VERSION = "v1";
export const MAX_FRAME_BYTES = 1 << 20;

export interface PoseMsg {
  pos: number[]; // 3
  rot: number[]; // 9, row-major
}

export interface CommandMessage {
  type: "command";
  seq: number;
  t: number;
  left: PoseMsg;
  right: PoseMsg;
  grip: [boolean, boolean];
  pads: [number, number, number];
  mode: string | null;
}

export interface SolverStats {
  iters: number;
  outer: number;
  converged: boolean;
  cost: number;
  viol: number;
}

export interface StateMessage {
  type: "state";
  tick: number;
  t: number;
  real: number[]; // 6: left xyz, right xyz
  joints_left: number[];
  joints_right: number[];
  base: number[]; // x, y, theta
  w: number[][]; // per goal: [w_left, w_right]
  mode: string;
  grip: boolean[];
  attached: string[];
  objects: Record<string, number[]>;
  violation: number;
  clearance: number;
  track_err: number[];
  solver: SolverStats;
  applied_seq: number;
  safety_hold: boolean;
  done: boolean;
}

export interface ArmScene {
  dh_a: number[];
  dh_d: number[];
  dh_alpha: number[];
  mount_translation: number[];
  mount_rotation: number[]; // 9 row-major
}

export interface SceneMessage {
  type: "header" | string;
  scenario: string;
  tick_rate_hz: number;
  goals: { position: number[]; frame: number[]; object: string }[];
  objects: Record<string, { shelf_z: number; lift_height: number }>;
  planes: { normal: number[]; offset: number }[];
  ellipsoids: {
    center: number[];
    orientation: number[];
    scale: number[];
    margin: number;
  }[];
  arms: { left: ArmScene; right: ArmScene };
}

export type InboundMessage =
  | { type: "welcome"; version: string; scene: SceneMessage }
  | { type: "ack"; seq: number; accepted: boolean; warnings?: string[] }
  | { type: "error"; error: string; detail?: string; seq?: number }
  | { type: "gap"; dropped: number }
  | { type: "pong"; t: number }
  | StateMessage;

export class ProtocolError extends Error {}

const encoder = new TextEncoder();
const decoder = new TextDecoder("utf-8", { fatal: true });

export function encodeFrame(message: object): Uint8Array {
  const payload = encoder.encode(JSON.stringify(message));
  if (payload.length > MAX_FRAME_BYTES) {
    throw new ProtocolError(`frame too large: ${payload.length} bytes`);
  }
  const head = encoder.encode(`${payload.length}\n`);
  const out = new Uint8Array(head.length + payload.length);
  out.set(head, 0);
  out.set(payload, head.length);
  return out;
}

/** Incremental frame decoder; partial frames are held, never surfaced. */
export class FrameDecoder {
  private buf: Uint8Array = new Uint8Array(0);

  feed(data: Uint8Array): InboundMessage[] {
    const joined = new Uint8Array(this.buf.length + data.length);
    joined.set(this.buf, 0);
    joined.set(data, this.buf.length);
    this.buf = joined;

    const out: InboundMessage[] = [];
    for (;;) {
      const sep = this.buf.indexOf(0x0a); // "\n"
      if (sep < 0) {
        if (this.buf.length > 32) throw new ProtocolError("missing length prefix terminator");
        break;
      }
      const head = decoder.decode(this.buf.subarray(0, sep));
      const length = Number(head);
      if (!Number.isInteger(length) || length < 0 || length > MAX_FRAME_BYTES) {
        throw new ProtocolError(`bad length prefix ${JSON.stringify(head)}`);
      }
      if (this.buf.length - sep - 1 < length) break; // truncated: wait
      const payload = this.buf.subarray(sep + 1, sep + 1 + length);
      this.buf = this.buf.slice(sep + 1 + length);
      let msg: unknown;
      try {
        msg = JSON.parse(decoder.decode(payload));
      } catch (err) {
        throw new ProtocolError(`bad frame payload: ${err}`);
      }
      if (typeof msg !== "object" || msg === null || !("type" in msg)) {
        throw new ProtocolError("frame is not a typed message");
      }
      out.push(msg as InboundMessage);
    }
    return out;
  }

  get pendingBytes(): number {
    return this.buf.length;
  }
}

export function helloMessage(): object {
  return { type: "hello", version: PROTOCOL_VERSION };
}

/** Field-named validation of a state message; unknown fields are ignored. */
export function validateState(msg: Record<string, unknown>): StateMessage {
  const need = (field: string, check: boolean) => {
    if (!check) throw new ProtocolError(`${field}: missing or wrong shape`);
  };
  need("real", Array.isArray(msg.real) && (msg.real as number[]).length === 6);
  need("joints_left", Array.isArray(msg.joints_left) && (msg.joints_left as number[]).length === 6);
  need("joints_right", Array.isArray(msg.joints_right) && (msg.joints_right as number[]).length === 6);
  need("base", Array.isArray(msg.base) && (msg.base as number[]).length === 3);
  need("tick", typeof msg.tick === "number");
  return msg as unknown as StateMessage;
}
