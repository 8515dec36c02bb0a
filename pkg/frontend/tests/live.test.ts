/**
 * Loopback integration: spawns the simulator with a live bridge, speaks
 * protocol v1 over TCP, and checks the two acceptance surfaces that matter
 * to the console: a clean 1000-message round trip and client-FK parity with
 * the state stream.
 */

import { ChildProcess, spawn } from "node:child_process";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { flangePosition } from "../src/fk";
import { SceneMessage, StateMessage } from "../src/protocol";
import { TcpClient } from "../src/tcp";

const here = dirname(fileURLToPath(import.meta.url));
const repoRoot = join(here, "..", "..");
const scenario = join(repoRoot, "scenarios", "single_arm_shelf.yaml");

const R_FRONT = [0, 0, 1, 0, 1, 0, -1, 0, 0]; // rot_y(90 deg), row-major

let proc: ChildProcess;
let port = 0;

beforeAll(async () => {
  proc = spawn("python3", ["-u", "-m", "teleassist.sim.cli", "run", scenario, "--bridge", "0"], {
    cwd: repoRoot,
    stdio: ["ignore", "pipe", "pipe"],
  });
  port = await new Promise<number>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("bridge did not announce a port")), 20000);
    proc.stdout!.on("data", (data: Buffer) => {
      const m = /listening on port (\d+)/.exec(data.toString());
      if (m) {
        clearTimeout(timer);
        resolve(Number(m[1]));
      }
    });
    proc.on("exit", (code) => reject(new Error(`simulator exited early (${code})`)));
  });
});

afterAll(() => {
  proc?.kill("SIGINT");
});

function holdCommand(seq: number) {
  return {
    type: "command",
    seq,
    t: seq * 0.01,
    left: { pos: [0.35, 0.25, 0.3], rot: R_FRONT },
    right: { pos: [0.35, -0.25, 0.3], rot: R_FRONT },
    grip: [false, false],
    pads: [0, 0, 0],
    mode: null,
  };
}

describe("live bridge session", () => {
  it("handshakes, round-trips 1000 commands with zero decode failures, and "
    + "keeps client FK within 1e-6 of the reported effectors", async () => {
    const client = await TcpClient.connect("127.0.0.1", port);
    client.hello();
    const welcome = await client.nextOfType<{ type: "welcome"; scene: SceneMessage }>("welcome");
    expect(welcome.scene.arms.left.dh_a.length).toBe(6);

    let ackCount = 0;
    let decodeFailures = 0;
    const states: StateMessage[] = [];

    const pump = (async () => {
      while (ackCount < 1000) {
        let msg;
        try {
          msg = await client.next(15000);
        } catch {
          decodeFailures++;
          break;
        }
        if (msg.type === "ack") ackCount++;
        else if (msg.type === "state") states.push(msg as StateMessage);
        else if (msg.type === "error") decodeFailures++;
      }
    })();

    for (let seq = 1; seq <= 1000; seq++) {
      client.send(holdCommand(seq));
      if (seq % 50 === 0) await new Promise((r) => setTimeout(r, 1)); // let acks drain
    }
    await pump;
    expect(decodeFailures).toBe(0);
    expect(ackCount).toBe(1000);

    // collect a few more live states, then verify client-side FK parity
    const deadline = Date.now() + 10000;
    while (states.length < 5 && Date.now() < deadline) {
      const msg = await client.next(5000);
      if (msg.type === "state") states.push(msg as StateMessage);
    }
    expect(states.length).toBeGreaterThanOrEqual(5);
    for (const st of states.slice(-5)) {
      const left = flangePosition(welcome.scene.arms.left, st.joints_left);
      const right = flangePosition(welcome.scene.arms.right, st.joints_right);
      for (let i = 0; i < 3; i++) {
        expect(Math.abs(left[i] - st.real[i])).toBeLessThan(1e-6);
        expect(Math.abs(right[i] - st.real[3 + i])).toBeLessThan(1e-6);
      }
    }
    client.close();
  }, 120000);
});
