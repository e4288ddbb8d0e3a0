// Canvas rendering: top-down scene, out-of-distribution gauge, controller
// banner (novice blue / expert red), counters, error badge.

import { StateFrame, StaticGeometry } from "./protocol.js";
import { ViewModel } from "./viewmodel.js";

const NOVICE_COLOR = "#2b6cb0";
const EXPERT_COLOR = "#c53030";

interface Transform {
  sx: (x: number) => number;
  sy: (y: number) => number;
}

function fitBounds(bounds: number[], w: number, h: number, pad = 20): Transform {
  const [x0, y0, x1, y1] = bounds;
  const scale = Math.min((w - 2 * pad) / (x1 - x0), (h - 2 * pad) / (y1 - y0));
  return {
    sx: (x: number) => pad + (x - x0) * scale,
    sy: (y: number) => h - pad - (y - y0) * scale,
  };
}

function drawScene(ctx: CanvasRenderingContext2D, geo: StaticGeometry,
                   frame: StateFrame, w: number, h: number): void {
  const tf = fitBounds(geo.bounds, w, h);
  ctx.strokeStyle = "#222";
  ctx.lineWidth = 2;
  if (geo.kind === "track" && geo.walls) {
    for (const [x1, y1, x2, y2] of geo.walls) {
      ctx.beginPath();
      ctx.moveTo(tf.sx(x1), tf.sy(y1));
      ctx.lineTo(tf.sx(x2), tf.sy(y2));
      ctx.stroke();
    }
    const [x, y, heading] = frame.geometry.pose;
    ctx.fillStyle = frame.controller === "expert" ? EXPERT_COLOR : NOVICE_COLOR;
    ctx.beginPath();
    const nose = 0.28;
    ctx.moveTo(tf.sx(x + nose * Math.cos(heading)), tf.sy(y + nose * Math.sin(heading)));
    ctx.lineTo(tf.sx(x + 0.14 * Math.cos(heading + 2.5)), tf.sy(y + 0.14 * Math.sin(heading + 2.5)));
    ctx.lineTo(tf.sx(x + 0.14 * Math.cos(heading - 2.5)), tf.sy(y + 0.14 * Math.sin(heading - 2.5)));
    ctx.closePath();
    ctx.fill();
  } else if (geo.kind === "grid" && geo.cells) {
    const n = geo.cells.length;
    const cell = Math.min((w - 40) / n, (h - 40) / n);
    for (let r = 0; r < n; r++) {
      for (let c = 0; c < n; c++) {
        if (geo.cells[r][c] === 1) {
          ctx.fillStyle = "#444";
          ctx.fillRect(20 + c * cell, 20 + r * cell, cell, cell);
        }
      }
    }
    const [ar, ac] = frame.geometry.pose;
    ctx.fillStyle = frame.controller === "expert" ? EXPERT_COLOR : NOVICE_COLOR;
    ctx.fillRect(20 + ac * cell + 2, 20 + ar * cell + 2, cell - 4, cell - 4);
    if (frame.geometry.goal) {
      const [gr, gc] = frame.geometry.goal;
      ctx.strokeStyle = "#2f855a";
      ctx.lineWidth = 3;
      ctx.strokeRect(20 + gc * cell + 2, 20 + gr * cell + 2, cell - 4, cell - 4);
    }
  } else {
    // corridor: side walls plus the mass, x wraps across the viewport
    const yHalf = geo.y_half ?? 1;
    const tf2 = fitBounds([0, -yHalf, 50, yHalf], w, h);
    ctx.beginPath();
    ctx.moveTo(tf2.sx(0), tf2.sy(yHalf));
    ctx.lineTo(tf2.sx(50), tf2.sy(yHalf));
    ctx.moveTo(tf2.sx(0), tf2.sy(-yHalf));
    ctx.lineTo(tf2.sx(50), tf2.sy(-yHalf));
    ctx.stroke();
    const [x, y] = frame.geometry.pose;
    ctx.fillStyle = frame.controller === "expert" ? EXPERT_COLOR : NOVICE_COLOR;
    ctx.beginPath();
    ctx.arc(tf2.sx(x % 50), tf2.sy(y), 6, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function drawGauge(ctx: CanvasRenderingContext2D, frame: StateFrame,
                   w: number, h: number): void {
  const m = frame.measure ?? 0;
  const threshold = frame.threshold ?? 1;
  const top = Math.max(threshold * 2, m * 1.1, 1e-12);
  const gx = w - 46;
  const gh = h - 60;
  ctx.strokeStyle = "#888";
  ctx.strokeRect(gx, 30, 18, gh);
  const fillH = Math.min(1, m / top) * gh;
  ctx.fillStyle = m > threshold ? EXPERT_COLOR : "#38a169";
  ctx.fillRect(gx, 30 + gh - fillH, 18, fillH);
  const ly = 30 + gh - (threshold / top) * gh;
  ctx.strokeStyle = "#000";
  ctx.beginPath();
  ctx.moveTo(gx - 6, ly);
  ctx.lineTo(gx + 24, ly);
  ctx.stroke();
}

export function renderFrame(canvas: HTMLCanvasElement, vm: ViewModel): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  ctx.font = "13px sans-serif";

  if (vm.errorBadge) {
    ctx.fillStyle = "#c53030";
    ctx.fillRect(10, h - 26, 8, 8);
    ctx.fillStyle = "#222";
    ctx.fillText(vm.errorBadge, 24, h - 18);
  }
  if (vm.frame === null || vm.staticGeometry === null) {
    ctx.fillStyle = "#222";
    ctx.fillText(`waiting for frames (${vm.connection})`, 14, 24);
    return;
  }
  drawScene(ctx, vm.staticGeometry, vm.frame, w, h);
  if (vm.frame.measure !== null) drawGauge(ctx, vm.frame, w, h);

  const expert = vm.frame.controller === "expert";
  ctx.fillStyle = expert ? EXPERT_COLOR : NOVICE_COLOR;
  ctx.fillRect(0, 0, w, 18);
  ctx.fillStyle = "#fff";
  const banner = expert ? "EXPERT CONTROL" : (vm.frame.autonomous ? "AUTONOMOUS" : "NOVICE");
  const suffix = vm.mode === "awaiting_takeover" ? "  --  TAKE OVER NOW (press an arrow key)" : "";
  ctx.fillText(banner + suffix, 8, 13);

  ctx.fillStyle = "#222";
  const c = vm.counters;
  ctx.fillText(
    `ep ${vm.frame.episode}  t ${vm.frame.t}  switches ${c.nswitch}  ` +
    `expert frames ${c.expertFrames}  monitoring ${c.monitoringSeconds.toFixed(1)}s`,
    8, h - 4);
  if (vm.ignoredInput) {
    ctx.fillStyle = "#975a16";
    ctx.fillText("input ignored (agent is autonomous)", 8, 34);
    vm.ignoredInput = false;
  }
  if (vm.ended && vm.serverMetrics) {
    ctx.fillStyle = "#222";
    ctx.fillText(
      `session ended: performance ${vm.serverMetrics.task_performance}, ` +
      `server nswitch ${vm.serverMetrics.nswitch}, expert frames ` +
      `${vm.serverMetrics.expert_frames}`, 8, 52);
  }
}
