/** Canvas painters for behavior summaries.
 *
 * Summaries arrive as flat numeric arrays (server-rendered down-samplings);
 * visual and auditory summaries are small mean grids drawn as heatmaps,
 * kinetic summaries are two interleaved joint traces drawn as sparklines.
 * Painters take a minimal 2D-context interface so tests can record calls
 * without a real canvas.
 */

import type { Modality } from "./api.js";

export interface Ctx2D {
  fillStyle: string;
  strokeStyle: string;
  lineWidth: number;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
}

export type SummaryShape =
  | { kind: "heatmap"; rows: number; cols: number }
  | { kind: "sparkline"; points: number; series: number };

export function summaryShape(modality: Modality): SummaryShape {
  switch (modality) {
    case "visual":
      return { kind: "heatmap", rows: 4, cols: 4 };
    case "auditory":
      return { kind: "heatmap", rows: 4, cols: 2 };
    case "kinetic":
      return { kind: "sparkline", points: 8, series: 2 };
  }
}

/** Map a payload value (tanh range, roughly [-1, 1]) to a blue-to-orange
 * diverging color; values outside the range are clamped. */
export function colorFor(v: number): string {
  const t = Math.max(-1, Math.min(1, v)) * 0.5 + 0.5;
  const r = Math.round(40 + t * 215);
  const g = Math.round(80 + Math.abs(t - 0.5) * -40 + 100);
  const b = Math.round(255 - t * 215);
  return `rgb(${r},${g},${b})`;
}

export function drawHeatmap(
  ctx: Ctx2D,
  summary: number[],
  rows: number,
  cols: number,
  width: number,
  height: number,
): void {
  if (summary.length !== rows * cols) {
    throw new Error(`summary length ${summary.length} != ${rows}x${cols}`);
  }
  ctx.clearRect(0, 0, width, height);
  const cw = width / cols;
  const ch = height / rows;
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      ctx.fillStyle = colorFor(summary[r * cols + c]!);
      ctx.fillRect(c * cw, r * ch, cw, ch);
    }
  }
}

/** Kinetic summaries interleave joints per time step: [t0j0, t0j1, t1j0, ...]. */
export function drawSparkline(
  ctx: Ctx2D,
  summary: number[],
  points: number,
  series: number,
  width: number,
  height: number,
): void {
  if (summary.length !== points * series) {
    throw new Error(`summary length ${summary.length} != ${points}x${series}`);
  }
  ctx.clearRect(0, 0, width, height);
  const palette = ["#d95f02", "#1b6ca8"];
  for (let s = 0; s < series; s++) {
    ctx.strokeStyle = palette[s % palette.length]!;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    for (let p = 0; p < points; p++) {
      const v = Math.max(-1, Math.min(1, summary[p * series + s]!));
      const x = (p / (points - 1)) * (width - 2) + 1;
      const y = height / 2 - (v * (height - 2)) / 2;
      if (p === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    }
    ctx.stroke();
  }
}

export function drawSummary(
  ctx: Ctx2D,
  modality: Modality,
  summary: number[],
  width: number,
  height: number,
): void {
  const shape = summaryShape(modality);
  if (shape.kind === "heatmap") {
    drawHeatmap(ctx, summary, shape.rows, shape.cols, width, height);
  } else {
    drawSparkline(ctx, summary, shape.points, shape.series, width, height);
  }
}
