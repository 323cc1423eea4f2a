/**
 * Minimal SVG chart primitives: linear scales, axes, polylines with NaN
 * gaps, bars, legends.  Everything renders to plain strings; output is
 * deterministic for identical inputs.
 */

export interface Scale {
  (value: number): number;
  domain: [number, number];
  range: [number, number];
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  const scale = ((value: number) => r0 + ((value - d0) / span) * (r1 - r0)) as Scale;
  scale.domain = domain;
  scale.range = range;
  return scale;
}

/** ~n round tick positions covering the domain. */
export function ticks(domain: [number, number], n = 5): number[] {
  const [lo, hi] = domain;
  const span = hi - lo;
  if (span <= 0) return [lo];
  const step = Math.pow(10, Math.floor(Math.log10(span / n)));
  const err = (span / n) / step;
  const unit = err >= 7.5 ? step * 10 : err >= 3.5 ? step * 5 : err >= 1.5 ? step * 2 : step;
  const out: number[] = [];
  for (let v = Math.ceil(lo / unit) * unit; v <= hi + unit * 1e-9; v += unit) {
    out.push(Math.abs(v) < unit * 1e-9 ? 0 : v);
  }
  return out;
}

export function fmt(value: number): string {
  if (value === 0) return "0";
  const abs = Math.abs(value);
  if (abs >= 1000 || abs < 0.001) return value.toExponential(1);
  return String(Number(value.toPrecision(4)));
}

const esc = (s: string) => s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");

export interface Series {
  x: ArrayLike<number>;
  y: ArrayLike<number>;
  color: string;
  label?: string;
  width?: number;
  dash?: string;
  opacity?: number;
}

/** Polyline path split at NaN samples (PWM traces have sparse columns). */
export function polyline(series: Series, sx: Scale, sy: Scale): string {
  const { x, y } = series;
  const parts: string[] = [];
  let pen = false;
  for (let i = 0; i < x.length; i++) {
    const yi = y[i];
    if (Number.isNaN(yi)) {
      pen = false;
      continue;
    }
    const cmd = pen ? "L" : "M";
    parts.push(`${cmd}${sx(x[i]).toFixed(2)},${sy(yi).toFixed(2)}`);
    pen = true;
  }
  if (parts.length === 0) return "";
  const width = series.width ?? 1.0;
  const dash = series.dash ? ` stroke-dasharray="${series.dash}"` : "";
  const opacity = series.opacity !== undefined ? ` stroke-opacity="${series.opacity}"` : "";
  return `<path d="${parts.join(" ")}" fill="none" stroke="${series.color}" stroke-width="${width}"${dash}${opacity}/>`;
}

export interface PanelOpts {
  x0: number;
  y0: number;
  width: number;
  height: number;
  xDomain: [number, number];
  yDomain: [number, number];
  yLabel: string;
  xLabel?: string;
  series: Series[];
  refLines?: { value: number; color: string; dash?: string; label?: string }[];
  xTickFormat?: (v: number) => string;
  showXTicks?: boolean;
}

/** One framed axis panel with tick marks, grid, series and reference lines. */
export function panel(opts: PanelOpts): string {
  const sx = linearScale(opts.xDomain, [opts.x0, opts.x0 + opts.width]);
  const sy = linearScale(opts.yDomain, [opts.y0 + opts.height, opts.y0]);
  const out: string[] = [];
  out.push(
    `<rect x="${opts.x0}" y="${opts.y0}" width="${opts.width}" height="${opts.height}" fill="white" stroke="#999"/>`,
  );
  for (const t of ticks(opts.yDomain)) {
    const y = sy(t);
    out.push(`<line x1="${opts.x0}" y1="${y.toFixed(2)}" x2="${opts.x0 + opts.width}" y2="${y.toFixed(2)}" stroke="#eee"/>`);
    out.push(`<text x="${opts.x0 - 6}" y="${(y + 3).toFixed(2)}" text-anchor="end" font-size="10">${fmt(t)}</text>`);
  }
  const xFmt = opts.xTickFormat ?? fmt;
  for (const t of ticks(opts.xDomain, 7)) {
    const x = sx(t);
    out.push(`<line x1="${x.toFixed(2)}" y1="${opts.y0}" x2="${x.toFixed(2)}" y2="${opts.y0 + opts.height}" stroke="#f3f3f3"/>`);
    if (opts.showXTicks ?? true) {
      out.push(`<text x="${x.toFixed(2)}" y="${opts.y0 + opts.height + 12}" text-anchor="middle" font-size="10">${xFmt(t)}</text>`);
    }
  }
  for (const ref of opts.refLines ?? []) {
    const y = sy(ref.value);
    out.push(`<line x1="${opts.x0}" y1="${y.toFixed(2)}" x2="${opts.x0 + opts.width}" y2="${y.toFixed(2)}" stroke="${ref.color}" stroke-dasharray="${ref.dash ?? "4,3"}"/>`);
  }
  for (const s of opts.series) {
    out.push(polyline(s, sx, sy));
  }
  out.push(
    `<text x="${opts.x0 - 38}" y="${opts.y0 + opts.height / 2}" font-size="11" text-anchor="middle" transform="rotate(-90 ${opts.x0 - 38} ${opts.y0 + opts.height / 2})">${esc(opts.yLabel)}</text>`,
  );
  if (opts.xLabel) {
    out.push(
      `<text x="${opts.x0 + opts.width / 2}" y="${opts.y0 + opts.height + 28}" font-size="11" text-anchor="middle">${esc(opts.xLabel)}</text>`,
    );
  }
  return out.join("\n");
}

export function legend(x: number, y: number, entries: { color: string; label: string; dash?: string }[]): string {
  const out: string[] = [];
  entries.forEach((entry, i) => {
    const yy = y + i * 14;
    out.push(`<line x1="${x}" y1="${yy}" x2="${x + 18}" y2="${yy}" stroke="${entry.color}" stroke-width="1.5"${entry.dash ? ` stroke-dasharray="${entry.dash}"` : ""}/>`);
    out.push(`<text x="${x + 23}" y="${yy + 3}" font-size="10">${esc(entry.label)}</text>`);
  });
  return out.join("\n");
}

export function bar(x: number, y: number, width: number, height: number, color: string): string {
  return `<rect x="${x.toFixed(2)}" y="${y.toFixed(2)}" width="${width.toFixed(2)}" height="${Math.max(height, 0).toFixed(2)}" fill="${color}"/>`;
}

export function document(width: number, height: number, body: string, title: string): string {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}" font-family="sans-serif">`,
    `<rect width="${width}" height="${height}" fill="white"/>`,
    `<text x="${width / 2}" y="18" text-anchor="middle" font-size="13">${esc(title)}</text>`,
    body,
    "</svg>",
  ].join("\n");
}
