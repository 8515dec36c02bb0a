import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { flangePosition, jointPositions } from "../src/fk";
import { ArmScene } from "../src/protocol";

interface FkCase {
  arm: ArmScene;
  q: number[];
  flange: number[];
  joints: number[][];
}

const here = dirname(fileURLToPath(import.meta.url));
const cases: FkCase[] = JSON.parse(
  readFileSync(join(here, "fixtures", "fk_cases.json"), "utf-8"),
);

describe("client-side forward kinematics", () => {
  it("matches the simulator's flange positions within 1e-9", () => {
    for (const c of cases) {
      const pos = flangePosition(c.arm, c.q);
      for (let i = 0; i < 3; i++) {
        expect(Math.abs(pos[i] - c.flange[i])).toBeLessThan(1e-9);
      }
    }
  });

  it("matches every joint frame origin along the chain", () => {
    for (const c of cases) {
      const pts = jointPositions(c.arm, c.q);
      expect(pts.length).toBe(c.joints.length);
      for (let j = 0; j < pts.length; j++) {
        for (let i = 0; i < 3; i++) {
          expect(Math.abs(pts[j][i] - c.joints[j][i])).toBeLessThan(1e-9);
        }
      }
    }
  });
});
