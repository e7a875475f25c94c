// Canvas power chart: draws exactly the received samples, newest window only.

import type { UiSessionView } from "./state.js";

export function drawChart(canvas: HTMLCanvasElement, view: UiSessionView): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);

  ctx.fillStyle = "#10151c";
  ctx.fillRect(0, 0, width, height);

  // horizontal grid at 0.25/0.5/0.75 plus the goal line
  ctx.strokeStyle = "#2a3442";
  ctx.lineWidth = 1;
  for (const level of [0.25, 0.5, 0.75]) {
    const y = height - level * height;
    ctx.beginPath();
    ctx.moveTo(0, y);
    ctx.lineTo(width, y);
    ctx.stroke();
  }
  if (view.goalPower !== null) {
    ctx.strokeStyle = "#d8a03d";
    ctx.setLineDash([6, 4]);
    const y = height - view.goalPower * height;
    ctx.beginPath();
    ctx.moveTo(0, y);
    ctx.lineTo(width, y);
    ctx.stroke();
    ctx.setLineDash([]);
  }

  const points = view.history;
  if (points.length === 0) return;
  const first = points[0].seq;
  const span = Math.max(points[points.length - 1].seq - first, 1);
  ctx.strokeStyle = "#4fd1c5";
  ctx.lineWidth = 2;
  ctx.beginPath();
  points.forEach((p, i) => {
    const x = ((p.seq - first) / span) * (width - 4) + 2;
    const y = height - p.power * height;
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
}
