/**
 * Hand-rolled SVG line chart with a logarithmic y axis, in the style of
 * convergence-curve figures: one curve per run, legend from labels.
 */

import { NumericField, RunRow, XAxis } from "./csv.js";

/** Zero gaps are clipped to this floor so they survive the log scale. */
export const LOG_FLOOR = 1e-16;

export interface Curve {
  label: string;
  points: Array<[number, number]>;
}

export interface ChartOptions {
  xLabel: string;
  yLabel: string;
  title?: string;
  width?: number;
  height?: number;
}

/**
 * Convert parsed rows into plottable curves; a curve stops at the last row
 * whose y value is finite (diverged runs render up to that point).
 */
export function curvesFrom(
  runs: Array<{ label: string; rows: RunRow[] }>,
  xAxis: XAxis,
  yField: NumericField = "gap",
): Curve[] {
  const labels = new Set<string>();
  return runs.map(({ label, rows }) => {
    if (labels.has(label)) {
      throw new Error(`duplicate curve label: ${label}`);
    }
    labels.add(label);
    const points: Array<[number, number]> = [];
    for (const row of rows) {
      const x = row[xAxis];
      const y = row[yField];
      if (!Number.isFinite(x) || !Number.isFinite(y)) break;
      points.push([x, Math.max(y, LOG_FLOOR)]);
    }
    if (points.length === 0) {
      throw new Error(`curve ${label} has no finite rows`);
    }
    return { label, points };
  });
}

const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
  "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22"];

const esc = (s: string) =>
  s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");

function linearTicks(min: number, max: number, count: number): number[] {
  const range = max - min || 1;
  const rough = range / count;
  const mag = Math.pow(10, Math.floor(Math.log10(rough)));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((s) => s >= rough) ?? rough;
  const ticks: number[] = [];
  for (let v = Math.ceil(min / step) * step; v <= max + step * 1e-9; v += step) {
    ticks.push(v);
  }
  return ticks;
}

function decadeTicks(logMin: number, logMax: number): number[] {
  const lo = Math.ceil(logMin);
  const hi = Math.floor(logMax);
  const all: number[] = [];
  for (let e = lo; e <= hi; e++) all.push(e);
  const stride = Math.max(1, Math.ceil(all.length / 9));
  return all.filter((_, i) => i % stride === 0);
}

const fmtTick = (v: number) =>
  Math.abs(v) >= 10000 ? v.toExponential(0) : String(Math.round(v * 1000) / 1000);

export function renderLogChart(curves: Curve[], opts: ChartOptions): string {
  const width = opts.width ?? 760;
  const height = opts.height ?? 480;
  const m = { left: 76, right: 16, top: 28, bottom: 52 };
  const pw = width - m.left - m.right;
  const ph = height - m.top - m.bottom;

  const xs = curves.flatMap((c) => c.points.map((p) => p[0]));
  const ys = curves.flatMap((c) => c.points.map((p) => p[1]));
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  let logMin = Math.log10(Math.min(...ys));
  let logMax = Math.log10(Math.max(...ys));
  if (logMax - logMin < 1e-9) {
    logMin -= 0.5;
    logMax += 0.5;
  }

  const sx = (x: number) =>
    m.left + (xMax === xMin ? pw / 2 : ((x - xMin) / (xMax - xMin)) * pw);
  const sy = (y: number) =>
    m.top + ph - ((Math.log10(y) - logMin) / (logMax - logMin)) * ph;

  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${width}" ` +
    `height="${height}" viewBox="0 0 ${width} ${height}" ` +
    `font-family="Helvetica, Arial, sans-serif" font-size="12">`);
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  if (opts.title) {
    parts.push(`<text x="${width / 2}" y="18" text-anchor="middle" ` +
      `font-size="14">${esc(opts.title)}</text>`);
  }

  for (const e of decadeTicks(logMin, logMax)) {
    const y = sy(Math.pow(10, e));
    parts.push(`<line x1="${m.left}" y1="${y}" x2="${m.left + pw}" y2="${y}" ` +
      `stroke="#ddd"/>`);
    parts.push(`<text x="${m.left - 8}" y="${y + 4}" text-anchor="end">` +
      `1e${e}</text>`);
  }
  for (const v of linearTicks(xMin, xMax, 7)) {
    const x = sx(v);
    parts.push(`<line x1="${x}" y1="${m.top + ph}" x2="${x}" ` +
      `y2="${m.top + ph + 5}" stroke="#444"/>`);
    parts.push(`<text x="${x}" y="${m.top + ph + 20}" text-anchor="middle">` +
      `${fmtTick(v)}</text>`);
  }
  parts.push(`<rect x="${m.left}" y="${m.top}" width="${pw}" height="${ph}" ` +
    `fill="none" stroke="#444"/>`);
  parts.push(`<text x="${m.left + pw / 2}" y="${height - 12}" ` +
    `text-anchor="middle">${esc(opts.xLabel)}</text>`);
  parts.push(`<text x="20" y="${m.top + ph / 2}" text-anchor="middle" ` +
    `transform="rotate(-90 20 ${m.top + ph / 2})">${esc(opts.yLabel)}</text>`);

  curves.forEach((curve, i) => {
    const color = PALETTE[i % PALETTE.length];
    const pts = curve.points
      .map(([x, y]) => `${sx(x).toFixed(2)},${sy(y).toFixed(2)}`)
      .join(" ");
    parts.push(`<polyline fill="none" stroke="${color}" stroke-width="1.6" ` +
      `points="${pts}"/>`);
    const ly = m.top + 14 + i * 17;
    parts.push(`<line x1="${m.left + pw - 150}" y1="${ly - 4}" ` +
      `x2="${m.left + pw - 126}" y2="${ly - 4}" stroke="${color}" ` +
      `stroke-width="2"/>`);
    parts.push(`<text x="${m.left + pw - 120}" y="${ly}">` +
      `${esc(curve.label)}</text>`);
  });

  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
