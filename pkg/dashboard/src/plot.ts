/** Top-down (x, y) pose plot on a 2D canvas; z is shown numerically elsewhere. */

import type { Vec3 } from "./protocol.js";

export interface PlotBounds {
  minX: number;
  maxX: number;
  minY: number;
  maxY: number;
}

/** Symmetric bounds around the trail with margin, never tighter than 1 m. */
export function boundsFor(trail: Vec3[]): PlotBounds {
  let minX = -1, maxX = 1, minY = -1, maxY = 1;
  for (const p of trail) {
    minX = Math.min(minX, p.x);
    maxX = Math.max(maxX, p.x);
    minY = Math.min(minY, p.y);
    maxY = Math.max(maxY, p.y);
  }
  const pad = 0.5;
  return { minX: minX - pad, maxX: maxX + pad, minY: minY - pad, maxY: maxY + pad };
}

export function drawTrail(canvas: HTMLCanvasElement, trail: Vec3[]): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  const bounds = boundsFor(trail);
  const sx = (x: number) => ((x - bounds.minX) / (bounds.maxX - bounds.minX)) * width;
  const sy = (y: number) => height - ((y - bounds.minY) / (bounds.maxY - bounds.minY)) * height;

  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#10151c";
  ctx.fillRect(0, 0, width, height);

  ctx.strokeStyle = "#27313d";
  ctx.lineWidth = 1;
  for (let gx = Math.ceil(bounds.minX); gx <= bounds.maxX; gx += 1) {
    ctx.beginPath();
    ctx.moveTo(sx(gx), 0);
    ctx.lineTo(sx(gx), height);
    ctx.stroke();
  }
  for (let gy = Math.ceil(bounds.minY); gy <= bounds.maxY; gy += 1) {
    ctx.beginPath();
    ctx.moveTo(0, sy(gy));
    ctx.lineTo(width, sy(gy));
    ctx.stroke();
  }

  if (trail.length > 1) {
    ctx.strokeStyle = "#3fa7ff";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(sx(trail[0]!.x), sy(trail[0]!.y));
    for (const p of trail.slice(1)) ctx.lineTo(sx(p.x), sy(p.y));
    ctx.stroke();
  }

  const head = trail[trail.length - 1];
  if (head) {
    ctx.fillStyle = "#ffd166";
    ctx.beginPath();
    ctx.arc(sx(head.x), sy(head.y), 6, 0, 2 * Math.PI);
    ctx.fill();
    ctx.strokeStyle = "#10151c";
    ctx.lineWidth = 2;
    ctx.stroke();
  }
}
