/**
 * Console bootstrap: connect to the bridge (through the WebSocket proxy),
 * pump inputs at the command cadence, and render at the display rate while
 * the simulation ticks at its own rate.
 */

import { COMMAND_PERIOD_MS, InputMapper } from "./input";
import { StateMessage, validateState } from "./protocol";
import { SceneRenderer } from "./render";
import { SessionModel } from "./session";
import { WsTransport } from "./transport";

function qs(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

function main(): void {
  const host = qs("host", window.location.hostname || "localhost");
  const port = qs("port", window.location.port || "8890");
  const sceneCanvas = document.getElementById("scene") as HTMLCanvasElement;
  const plotCanvas = document.getElementById("plots") as HTMLCanvasElement;
  const statusEl = document.getElementById("status") as HTMLElement;

  const session = new SessionModel();
  const renderer = new SceneRenderer(sceneCanvas, plotCanvas);
  const transport = new WsTransport(`ws://${host}:${port}/bridge`);
  let input: InputMapper | null = null;

  transport.onmessage = (msg) => {
    session.handle(msg, performance.now());
    if (msg.type === "state" && input === null) {
      const state = validateState(msg as unknown as Record<string, unknown>);
      // seed the command poses from the first observed robot state; the
      // commanded orientations start aligned with the arms' current frames
      input = new InputMapper(
        state.real.slice(0, 3),
        state.real.slice(3, 6),
        rotFromState(state, "left"),
        rotFromState(state, "right"),
      );
    }
  };
  transport.onclose = () => {
    session.connection = "closed";
  };

  // orientation channel: hold the scenario's approach frames (the browser
  // console commands positions; orientation editing is out of scope)
  const rotHold: Record<string, number[]> = {
    left: [0, 0, 1, 0, 1, 0, -1, 0, 0],
    right: [0, 0, 1, 0, 1, 0, -1, 0, 0],
  };
  function rotFromState(_state: StateMessage, side: "left" | "right"): number[] {
    return rotHold[side].slice();
  }

  // pointer input: drags on a view command the active arm in that plane
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  sceneCanvas.addEventListener("pointerdown", (e) => {
    dragging = true;
    lastX = e.offsetX;
    lastY = e.offsetY;
    sceneCanvas.setPointerCapture(e.pointerId);
  });
  sceneCanvas.addEventListener("pointermove", (e) => {
    if (!dragging || !input) return;
    input.pointerDrag(renderer.planeForPoint(e.offsetX), e.offsetX - lastX, e.offsetY - lastY);
    lastX = e.offsetX;
    lastY = e.offsetY;
  });
  sceneCanvas.addEventListener("pointerup", () => {
    dragging = false;
  });
  window.addEventListener("keydown", (e) => input?.keyDown(e.key.toLowerCase()));
  window.addEventListener("keyup", (e) => input?.keyUp(e.key.toLowerCase()));

  // gamepad: left stick moves the active arm in x-y, triggers not mapped
  function pollGamepad() {
    const pads = navigator.getGamepads?.() ?? [];
    const pad = pads[0];
    if (pad && input) {
      const dead = (v: number) => (Math.abs(v) < 0.08 ? 0 : v);
      input.stick([dead(pad.axes[1] ?? 0) * -1, dead(pad.axes[0] ?? 0) * -1, dead(pad.axes[3] ?? 0) * -1]);
    }
  }

  // command pump at the fixed cadence
  window.setInterval(() => {
    if (!input || session.connection !== "connected") return;
    pollGamepad();
    transport.sendRaw(input.command(session.nextSeq(), performance.now() / 1000));
  }, COMMAND_PERIOD_MS);

  // render loop at display rate with 10 Hz state interpolation
  function frame() {
    renderer.render(session, performance.now());
    const st = session.state;
    statusEl.textContent = [
      `conn: ${session.connection}`,
      st ? `tick ${st.tick} mode ${st.mode}` : "no state",
      st?.safety_hold ? "SAFETY HOLD" : "",
      st?.attached.length ? `holding: ${st.attached.join(",")}` : "",
      st?.done ? "TASK COMPLETE" : "",
      session.lastError ? `err: ${session.lastError}` : "",
      `arm: ${input?.activeArm ?? "-"} (1/2 to switch, g/h grip, m mode, wasd+qe base)`,
    ]
      .filter(Boolean)
      .join("  |  ");
    window.requestAnimationFrame(frame);
  }
  window.requestAnimationFrame(frame);
}

window.addEventListener("DOMContentLoaded", main);
