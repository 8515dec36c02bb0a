/**
 * Orthographic triple-view scene rendering plus strip plots, on 2-D canvas.
 * Top (x-y), front (x-z), and side (y-z) projections show shelf planes,
 * keep-out ellipsoids (Schur-complement shadows), goals with assistance
 * highlighting, both arm skeletons from client-side FK, and the base
 * footprint.
 */

import { jointPositions } from "./fk";
import { SceneMessage, StateMessage } from "./protocol";
import { RingBuffer, SessionModel } from "./session";

type Plane = "xy" | "xz" | "yz";
const VIEWS: { plane: Plane; label: string; ax: number; ay: number }[] = [
  { plane: "xy", label: "top (x-y)", ax: 0, ay: 1 },
  { plane: "xz", label: "front (x-z)", ax: 0, ay: 2 },
  { plane: "yz", label: "side (y-z)", ax: 1, ay: 2 },
];

export interface Viewport {
  x: number;
  y: number;
  w: number;
  h: number;
  ax: number;
  ay: number;
  scale: number; // px per meter
  cx: number; // world coords at viewport center
  cy: number;
}

export const ASSIST_HIGHLIGHT_THRESHOLD = 0.5;

/** 2x2 shadow of the ellipsoid quadratic on a coordinate plane. */
export function ellipsoidShadow(
  shape9: number[],
  scale: number[],
  margin: number,
  ax: number,
  ay: number,
): { a: number; b: number; c: number } {
  // full shape matrix S = R M R^T scaled so the boundary is x^T S x = margin
  const r = shape9;
  const m = scale;
  const s = new Array(9).fill(0);
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      let acc = 0;
      for (let k = 0; k < 3; k++) acc += r[3 * i + k] * m[k] * r[3 * j + k];
      s[3 * i + j] = acc;
    }
  }
  const az = 3 - ax - ay; // dropped coordinate
  const spp = [s[3 * ax + ax], s[3 * ax + ay], s[3 * ay + ax], s[3 * ay + ay]];
  const spz = [s[3 * ax + az], s[3 * ay + az]];
  const szz = s[3 * az + az];
  // Schur complement: shadow matrix = S_pp - S_pz S_zz^-1 S_zp
  const a = spp[0] - (spz[0] * spz[0]) / szz;
  const b = spp[1] - (spz[0] * spz[1]) / szz;
  const c = spp[3] - (spz[1] * spz[1]) / szz;
  return { a, b, c };
}

function toPx(vp: Viewport, wx: number, wy: number): [number, number] {
  return [vp.x + vp.w / 2 + (wx - vp.cx) * vp.scale, vp.y + vp.h / 2 - (wy - vp.cy) * vp.scale];
}

function drawEllipse(
  ctx: CanvasRenderingContext2D,
  vp: Viewport,
  cx: number,
  cy: number,
  shadow: { a: number; b: number; c: number },
  margin: number,
  style: string,
) {
  // eigen-decompose the 2x2 shadow to get semi-axes and tilt
  const tr = shadow.a + shadow.c;
  const det = shadow.a * shadow.c - shadow.b * shadow.b;
  const disc = Math.sqrt(Math.max(0, (tr * tr) / 4 - det));
  const l1 = tr / 2 + disc;
  const l2 = tr / 2 - disc;
  if (l1 <= 0 || l2 <= 0) return;
  const angle = Math.atan2(l1 - shadow.a, shadow.b || 1e-12);
  const r1 = Math.sqrt(margin / l1);
  const r2 = Math.sqrt(margin / l2);
  const [px, py] = toPx(vp, cx, cy);
  ctx.save();
  ctx.translate(px, py);
  ctx.rotate(-angle);
  ctx.beginPath();
  ctx.ellipse(0, 0, Math.max(1, r1 * vp.scale), Math.max(1, r2 * vp.scale), 0, 0, 2 * Math.PI);
  ctx.strokeStyle = style;
  ctx.fillStyle = style.replace("1)", "0.15)");
  ctx.fill();
  ctx.stroke();
  ctx.restore();
}

export class SceneRenderer {
  constructor(
    private canvas: HTMLCanvasElement,
    private plotCanvas: HTMLCanvasElement,
  ) {}

  viewports(): Viewport[] {
    const w = this.canvas.width / 3;
    return VIEWS.map((view, i) => ({
      x: i * w,
      y: 0,
      w,
      h: this.canvas.height,
      ax: view.ax,
      ay: view.ay,
      scale: Math.min(w, this.canvas.height) / 2.2,
      cx: view.ax === 0 ? 0.45 : 0.0,
      cy: view.ay === 2 ? 0.25 : 0.0,
    }));
  }

  planeForPoint(px: number): Plane {
    const idx = Math.min(2, Math.floor((px / this.canvas.width) * 3));
    return VIEWS[idx].plane;
  }

  render(session: SessionModel, nowMs: number): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const scene = session.scene;
    const state = session.state;
    ctx.fillStyle = "#11151c";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    if (!scene || !state) {
      ctx.fillStyle = "#8899aa";
      ctx.font = "16px monospace";
      ctx.fillText("waiting for state…", 20, 30);
      return;
    }

    const effectors =
      session.interpolatedEffectors(nowMs, scene.tick_rate_hz) ?? state.real;
    const minW = state.w.length
      ? state.w.map((p) => Math.min(p[0], p[1]))
      : [];

    for (const vp of this.viewports()) {
      ctx.save();
      ctx.beginPath();
      ctx.rect(vp.x, vp.y, vp.w, vp.h);
      ctx.clip();
      ctx.strokeStyle = "#2a3240";
      ctx.strokeRect(vp.x + 0.5, vp.y + 0.5, vp.w - 1, vp.h - 1);
      ctx.fillStyle = "#667788";
      ctx.font = "12px monospace";
      ctx.fillText(VIEWS[(vp.x / vp.w) | 0].label, vp.x + 8, vp.y + 16);

      // shelf planes as lines where they cut the view plane
      for (const plane of scene.planes) {
        const n = plane.normal;
        if (Math.abs(n[vp.ax]) < 1e-9 && Math.abs(n[vp.ay]) < 1e-9) continue;
        this.drawPlaneLine(ctx, vp, n, plane.offset);
      }

      for (const e of scene.ellipsoids) {
        const shadow = ellipsoidShadow(e.orientation, e.scale, e.margin, vp.ax, vp.ay);
        drawEllipse(ctx, vp, e.center[vp.ax], e.center[vp.ay], shadow, e.margin,
          "rgba(220,120,90,1)");
      }

      scene.goals.forEach((g, j) => {
        const [px, py] = toPx(vp, g.position[vp.ax], g.position[vp.ay]);
        const assisting = minW.length > j && minW[j] < ASSIST_HIGHLIGHT_THRESHOLD;
        ctx.beginPath();
        ctx.arc(px, py, assisting ? 8 : 5, 0, 2 * Math.PI);
        ctx.fillStyle = assisting ? "rgba(120,230,140,1)" : "rgba(120,160,230,1)";
        ctx.fill();
        if (assisting) {
          ctx.strokeStyle = "rgba(120,230,140,0.6)";
          ctx.stroke();
        }
      });

      // arm skeletons from client-side FK on the streamed joint vectors
      for (const [joints, arm, color] of [
        [state.joints_left, scene.arms.left, "#6fd3ff"],
        [state.joints_right, scene.arms.right, "#ffd36f"],
      ] as const) {
        const pts = jointPositions(arm, joints);
        ctx.beginPath();
        pts.forEach((p, i) => {
          const [px, py] = toPx(vp, p[vp.ax], p[vp.ay]);
          if (i === 0) ctx.moveTo(px, py);
          else ctx.lineTo(px, py);
        });
        ctx.strokeStyle = color;
        ctx.lineWidth = 2;
        ctx.stroke();
        ctx.lineWidth = 1;
      }

      // realized effector markers (interpolated between ticks)
      for (const [off, color] of [[0, "#6fd3ff"], [3, "#ffd36f"]] as const) {
        const [px, py] = toPx(vp, effectors[off + vp.ax], effectors[off + vp.ay]);
        ctx.beginPath();
        ctx.arc(px, py, 4, 0, 2 * Math.PI);
        ctx.fillStyle = color;
        ctx.fill();
      }

      // base footprint in the top view
      if (vp.ax === 0 && vp.ay === 1) {
        const [bx, by, theta] = state.base;
        const [px, py] = toPx(vp, bx, by);
        ctx.save();
        ctx.translate(px, py);
        ctx.rotate(-theta);
        ctx.strokeStyle = "#99aa77";
        ctx.strokeRect(-0.25 * vp.scale, -0.2 * vp.scale, 0.5 * vp.scale, 0.4 * vp.scale);
        ctx.restore();
      }
      ctx.restore();
    }

    if (session.isStale(nowMs)) {
      ctx.fillStyle = "rgba(20,20,28,0.65)";
      ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
      ctx.fillStyle = "#ccbb88";
      ctx.font = "18px monospace";
      ctx.fillText("state stale — check the bridge", 20, 40);
    }

    this.renderPlots(session);
  }

  private drawPlaneLine(
    ctx: CanvasRenderingContext2D,
    vp: Viewport,
    normal: number[],
    offset: number,
  ) {
    // the in-plane component of n . p = b is a line a*x + b*y = c
    const a = normal[vp.ax];
    const b = normal[vp.ay];
    const c = offset;
    const span = 3.0;
    let p0: [number, number], p1: [number, number];
    if (Math.abs(b) > Math.abs(a)) {
      p0 = [-span, (c + span * a) / b];
      p1 = [span, (c - span * a) / b];
    } else {
      p0 = [(c + span * b) / a, -span];
      p1 = [(c - span * b) / a, span];
    }
    const [x0, y0] = toPx(vp, p0[0], p0[1]);
    const [x1, y1] = toPx(vp, p1[0], p1[1]);
    ctx.beginPath();
    ctx.moveTo(x0, y0);
    ctx.lineTo(x1, y1);
    ctx.strokeStyle = "#445566";
    ctx.stroke();
  }

  private renderPlots(session: SessionModel): void {
    const ctx = this.plotCanvas.getContext("2d");
    if (!ctx) return;
    const w = this.plotCanvas.width;
    const h = this.plotCanvas.height;
    ctx.fillStyle = "#11151c";
    ctx.fillRect(0, 0, w, h);
    const rows: [string, RingBuffer, number, string][] = [
      ["min w", session.wPlot, 1.0, "#78e68c"],
      ["inter-effector (m)", session.distancePlot, 1.0, "#ffd36f"],
      ["track err (m)", session.trackErrPlot, 0.1, "#6fd3ff"],
    ];
    const rowH = h / rows.length;
    rows.forEach(([label, buf, top, color], r) => {
      const y0 = r * rowH;
      ctx.strokeStyle = "#2a3240";
      ctx.strokeRect(0.5, y0 + 0.5, w - 1, rowH - 1);
      ctx.fillStyle = "#667788";
      ctx.font = "11px monospace";
      ctx.fillText(label, 6, y0 + 14);
      const vals = buf.values();
      if (vals.length < 2) return;
      ctx.beginPath();
      vals.forEach((v, i) => {
        const px = (i / (vals.length - 1)) * (w - 8) + 4;
        const py = y0 + rowH - 4 - Math.min(1, v / top) * (rowH - 20);
        if (i === 0) ctx.moveTo(px, py);
        else ctx.lineTo(px, py);
      });
      ctx.strokeStyle = color;
      ctx.stroke();
    });
  }
}
