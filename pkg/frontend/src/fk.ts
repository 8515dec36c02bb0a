/**
 * Client-side forward kinematics for the six-axis arms, mirroring the
 * simulator's standard-DH chain so the console can draw skeletons straight
 * from joint vectors and verify effector positions against the state stream.
 */

import { ArmScene } from "./protocol";

export type Mat4 = Float64Array; // row-major 4x4

export function mat4Identity(): Mat4 {
  const m = new Float64Array(16);
  m[0] = m[5] = m[10] = m[15] = 1;
  return m;
}

export function mat4Mul(a: Mat4, b: Mat4): Mat4 {
  const out = new Float64Array(16);
  for (let i = 0; i < 4; i++) {
    for (let j = 0; j < 4; j++) {
      let acc = 0;
      for (let k = 0; k < 4; k++) acc += a[4 * i + k] * b[4 * k + j];
      out[4 * i + j] = acc;
    }
  }
  return out;
}

export function dhTransform(theta: number, d: number, a: number, alpha: number): Mat4 {
  const ct = Math.cos(theta), st = Math.sin(theta);
  const ca = Math.cos(alpha), sa = Math.sin(alpha);
  // prettier-ignore
  return new Float64Array([
    ct, -st * ca,  st * sa, a * ct,
    st,  ct * ca, -ct * sa, a * st,
     0,       sa,       ca,      d,
     0,        0,        0,      1,
  ]);
}

export function mountTransform(arm: ArmScene): Mat4 {
  const r = arm.mount_rotation;
  const t = arm.mount_translation;
  // prettier-ignore
  return new Float64Array([
    r[0], r[1], r[2], t[0],
    r[3], r[4], r[5], t[1],
    r[6], r[7], r[8], t[2],
    0, 0, 0, 1,
  ]);
}

/** Base-frame positions of the mount origin and every joint frame origin. */
export function jointPositions(arm: ArmScene, q: number[]): number[][] {
  let t = mountTransform(arm);
  const pts: number[][] = [[t[3], t[7], t[11]]];
  for (let i = 0; i < 6; i++) {
    t = mat4Mul(t, dhTransform(q[i], arm.dh_d[i], arm.dh_a[i], arm.dh_alpha[i]));
    pts.push([t[3], t[7], t[11]]);
  }
  return pts;
}

/** Flange position in the robot base frame. */
export function flangePosition(arm: ArmScene, q: number[]): number[] {
  const pts = jointPositions(arm, q);
  return pts[pts.length - 1];
}
