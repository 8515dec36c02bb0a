/**
 * Input mapping: pointer drags, keys, and gamepad sticks become operator
 * commands at a fixed 50 ms cadence. Pointer deltas run through an
 * exponential moving average (hand-tremor smoothing); gripper keys are
 * debounced to one toggle per press.
 */

import { CommandMessage } from "./protocol";

export const COMMAND_PERIOD_MS = 50;
export const POINTER_EMA = 0.3;
const MODES = ["independent", "top_down_front", "side"];

export interface InputConfig {
  /** meters of effector motion per pixel of drag */
  dragScale: number;
  /** m/s of effector motion at full stick deflection */
  stickScale: number;
  padKeyStep: number;
}

export const DEFAULT_INPUT: InputConfig = {
  dragScale: 0.001,
  stickScale: 0.2,
  padKeyStep: 1.0,
};

type Plane = "xy" | "xz" | "yz";

/** Maps a 2-D drag in a view plane onto base-frame axes. */
const PLANE_AXES: Record<Plane, [number, number]> = {
  xy: [0, 1],
  xz: [0, 2],
  yz: [1, 2],
};

export class InputMapper {
  activeArm: "left" | "right" = "left";
  private left: number[];
  private right: number[];
  private leftRot: number[];
  private rightRot: number[];
  private grip: [boolean, boolean] = [false, false];
  private pads: [number, number, number] = [0, 0, 0];
  private modeIdx = 0;
  private emaDelta = [0, 0, 0];
  private pendingDelta = [0, 0, 0];
  private heldKeys = new Set<string>();

  constructor(
    startLeft: number[],
    startRight: number[],
    leftRot: number[],
    rightRot: number[],
    private config: InputConfig = DEFAULT_INPUT,
  ) {
    this.left = startLeft.slice();
    this.right = startRight.slice();
    this.leftRot = leftRot.slice();
    this.rightRot = rightRot.slice();
  }

  pointerDrag(plane: Plane, dxPx: number, dyPx: number): void {
    const [ax, ay] = PLANE_AXES[plane];
    const delta = [0, 0, 0];
    delta[ax] = dxPx * this.config.dragScale;
    delta[ay] = -dyPx * this.config.dragScale; // screen y grows downward
    for (let i = 0; i < 3; i++) {
      this.emaDelta[i] = POINTER_EMA * delta[i] + (1 - POINTER_EMA) * this.emaDelta[i];
      this.pendingDelta[i] += this.emaDelta[i];
    }
  }

  stick(axes: [number, number, number], periodMs: number = COMMAND_PERIOD_MS): void {
    const scale = (this.config.stickScale * periodMs) / 1000;
    for (let i = 0; i < 3; i++) this.pendingDelta[i] += axes[i] * scale;
  }

  keyDown(key: string): void {
    if (this.heldKeys.has(key)) return; // debounce repeats while held
    this.heldKeys.add(key);
    switch (key) {
      case "g":
        this.grip[0] = !this.grip[0];
        break;
      case "h":
        this.grip[1] = !this.grip[1];
        break;
      case "m":
        this.modeIdx = (this.modeIdx + 1) % MODES.length;
        break;
      case "1":
        this.activeArm = "left";
        break;
      case "2":
        this.activeArm = "right";
        break;
    }
  }

  keyUp(key: string): void {
    this.heldKeys.delete(key);
  }

  /** WASD drive the base pads, Q/E yaw; held keys persist across commands. */
  private padsFromKeys(): [number, number, number] {
    const step = this.config.padKeyStep;
    const x = (this.heldKeys.has("w") ? step : 0) - (this.heldKeys.has("s") ? step : 0);
    const y = (this.heldKeys.has("a") ? step : 0) - (this.heldKeys.has("d") ? step : 0);
    const yaw = (this.heldKeys.has("q") ? step : 0) - (this.heldKeys.has("e") ? step : 0);
    return [x, y, yaw];
  }

  gripperState(): [boolean, boolean] {
    return [this.grip[0], this.grip[1]];
  }

  /** Build the command for this cadence period; holds pose when idle. */
  command(seq: number, t: number): CommandMessage {
    const target = this.activeArm === "left" ? this.left : this.right;
    for (let i = 0; i < 3; i++) {
      target[i] += this.pendingDelta[i];
      this.pendingDelta[i] = 0;
    }
    this.pads = this.padsFromKeys();
    return {
      type: "command",
      seq,
      t,
      left: { pos: this.left.slice(), rot: this.leftRot.slice() },
      right: { pos: this.right.slice(), rot: this.rightRot.slice() },
      grip: [this.grip[0], this.grip[1]],
      pads: this.pads,
      mode: MODES[this.modeIdx] === "independent" ? null : MODES[this.modeIdx],
    };
  }
}
