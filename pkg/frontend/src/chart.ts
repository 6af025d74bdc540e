/** Minimal dependency-free SVG line chart for report series. */

import type { ReportPoint } from "./types.js";

export interface ChartOptions {
  width?: number;
  height?: number;
  stroke?: string;
}

export function lineChartSvg(points: ReportPoint[], options: ChartOptions = {}): string {
  const width = options.width ?? 640;
  const height = options.height ?? 180;
  const stroke = options.stroke ?? "#2a6f97";
  const pad = 28;
  const present = points.filter((p) => p.value !== null) as { period: string; value: number }[];
  if (present.length === 0) {
    return `<svg viewBox="0 0 ${width} ${height}" class="chart">` +
      `<text x="${width / 2}" y="${height / 2}" text-anchor="middle" class="chart-empty">` +
      `no data in period</text></svg>`;
  }
  const values = present.map((p) => p.value);
  const lo = Math.min(...values, 0);
  const hi = Math.max(...values);
  const spanY = hi - lo || 1;
  const spanX = Math.max(points.length - 1, 1);
  const x = (i: number) => pad + (i * (width - 2 * pad)) / spanX;
  const y = (v: number) => height - pad - ((v - lo) * (height - 2 * pad)) / spanY;

  // nulls break the polyline into segments: absent periods stay visibly absent
  const segments: string[] = [];
  let current: string[] = [];
  points.forEach((p, i) => {
    if (p.value === null) {
      if (current.length > 1) segments.push(current.join(" "));
      current = [];
    } else {
      current.push(`${x(i).toFixed(1)},${y(p.value).toFixed(1)}`);
    }
  });
  if (current.length > 1) segments.push(current.join(" "));

  const polylines = segments
    .map((pts) => `<polyline fill="none" stroke="${stroke}" stroke-width="1.5" points="${pts}"/>`)
    .join("");
  const dots = points
    .map((p, i) => p.value === null ? "" :
      `<circle cx="${x(i).toFixed(1)}" cy="${y(p.value).toFixed(1)}" r="2.2" fill="${stroke}">` +
      `<title>${p.period}: ${p.value}</title></circle>`)
    .join("");
  const firstLabel = points[0]?.period ?? "";
  const lastLabel = points[points.length - 1]?.period ?? "";
  return `<svg viewBox="0 0 ${width} ${height}" class="chart">` +
    `<line x1="${pad}" y1="${height - pad}" x2="${width - pad}" y2="${height - pad}" class="axis"/>` +
    `<text x="${pad}" y="${height - 8}" class="tick">${firstLabel}</text>` +
    `<text x="${width - pad}" y="${height - 8}" text-anchor="end" class="tick">${lastLabel}</text>` +
    `<text x="8" y="${y(hi) + 4}" class="tick">${hi}</text>` +
    polylines + dots + `</svg>`;
}
