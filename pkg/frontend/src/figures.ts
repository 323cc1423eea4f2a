/**
 * The two figure builders: the stacked three-panel waveform view of one or
 * two traces (gate/duty, inductor current, output voltage with the
 * reference), and the grouped sweep-comparison chart (recovery time and
 * output ripple per scenario).
 */

import { MetricsRow, Trace } from "./csv.js";
import { SchemaError } from "./csv.js";
import { Series, bar, document as svgDocument, fmt, legend, linearScale, panel, ticks } from "./svg.js";

export interface NamedTrace {
  label: string;
  trace: Trace;
}

const PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];

function windowIndices(time: ArrayLike<number>, window?: [number, number]): [number, number] {
  if (!window) return [0, time.length];
  let lo = 0;
  let hi = time.length;
  while (lo < hi && time[lo] < window[0]) lo++;
  while (hi > lo && time[hi - 1] > window[1]) hi--;
  if (hi <= lo) throw new SchemaError(`time window [${window[0]}, ${window[1]}] selects no samples`);
  return [lo, hi];
}

function slice(arr: Float64Array, lo: number, hi: number): Float64Array {
  return arr.subarray(lo, hi);
}

function extent(values: ArrayLike<number>[], pad = 0.05): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const arr of values) {
    for (let i = 0; i < arr.length; i++) {
      const v = arr[i];
      if (Number.isNaN(v)) continue;
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  if (!Number.isFinite(lo)) return [0, 1];
  const span = hi - lo || 1;
  return [lo - pad * span, hi + pad * span];
}

/**
 * Three stacked panels over a shared time axis (milliseconds from the load
 * step).  Each input trace contributes a gate/duty pair, a current line
 * and a voltage line; the first trace's reference voltage is drawn dotted.
 */
export function traceFigure(inputs: NamedTrace[], opts: { window?: [number, number]; title?: string } = {}): string {
  if (inputs.length === 0) throw new SchemaError("no traces given");
  const width = 840;
  const panelH = 150;
  const gap = 34;
  const x0 = 70;
  const panelW = width - x0 - 130;
  const height = 40 + 3 * panelH + 2 * gap + 44;

  const pieces: string[] = [];
  const gateSeries: Series[] = [];
  const dutySeries: Series[] = [];
  const currentSeries: Series[] = [];
  const voltageSeries: Series[] = [];
  let xDomain: [number, number] = [0, 1];

  inputs.forEach((input, k) => {
    const color = PALETTE[k % PALETTE.length];
    const t = input.trace.columns.time_s;
    const [lo, hi] = windowIndices(t, opts.window);
    const ms = new Float64Array(hi - lo);
    for (let i = lo; i < hi; i++) ms[i - lo] = t[i] * 1e3;
    if (k === 0) xDomain = [ms[0], ms[ms.length - 1]];
    gateSeries.push({
      x: ms, y: slice(input.trace.columns.gate, lo, hi),
      color, width: 0.4, opacity: 0.45,
    });
    dutySeries.push({
      x: ms, y: slice(input.trace.columns.duty, lo, hi),
      color, width: 1.4, label: `${input.label} duty`,
    });
    currentSeries.push({
      x: ms, y: slice(input.trace.columns.i_L_A, lo, hi),
      color, width: 1.0, label: input.label,
    });
    voltageSeries.push({
      x: ms, y: slice(input.trace.columns.v_out_V, lo, hi),
      color, width: 1.0, label: input.label,
    });
  });

  const vRef = inputs[0].trace.meta.vRef;
  let y0 = 40;
  pieces.push(
    panel({
      x0, y0, width: panelW, height: panelH,
      xDomain, yDomain: [-0.05, 1.05],
      yLabel: "gate / effective duty",
      series: [...gateSeries, ...dutySeries],
      showXTicks: false,
    }),
  );
  y0 += panelH + gap;
  pieces.push(
    panel({
      x0, y0, width: panelW, height: panelH,
      xDomain, yDomain: extent(currentSeries.map((s) => s.y)),
      yLabel: "inductor current [A]",
      series: currentSeries,
      showXTicks: false,
    }),
  );
  y0 += panelH + gap;
  pieces.push(
    panel({
      x0, y0, width: panelW, height: panelH,
      xDomain, yDomain: extent([...voltageSeries.map((s) => s.y), [vRef]]),
      yLabel: "output voltage [V]",
      xLabel: "time from load step [ms]",
      series: voltageSeries,
      refLines: [{ value: vRef, color: "#d62728", dash: "2,3", label: "reference" }],
    }),
  );
  pieces.push(
    legend(x0 + panelW + 10, 50, [
      ...inputs.map((input, k) => ({ color: PALETTE[k % PALETTE.length], label: input.label })),
      { color: "#d62728", label: `${fmt(vRef)} V reference`, dash: "2,3" },
    ]),
  );
  return svgDocument(width, height, pieces.join("\n"), opts.title ?? "Load-step response");
}

/**
 * Grouped comparison across sweep rows: recovery time (left axis, bars)
 * and output ripple (right axis, bars).  Rows that failed or never
 * recovered are rendered as hatched labels instead of fake bars.
 */
export function sweepFigure(rows: MetricsRow[], opts: { title?: string } = {}): string {
  if (rows.length === 0) throw new SchemaError("metrics table has no rows");
  const width = 720;
  const height = 360;
  const x0 = 80;
  const chartW = width - x0 - 90;
  const y0 = 50;
  const chartH = 230;

  const recoveries = rows.map((r) => (r.recovered ? r.recoveryS * 1e3 : NaN));
  const ripples = rows.map((r) => r.ripplePp * 1e3);
  const recMax = Math.max(...recoveries.filter((v) => !Number.isNaN(v)), 0.1);
  const ripMax = Math.max(...ripples.filter((v) => !Number.isNaN(v)), 1);
  const syRec = linearScale([0, recMax * 1.15], [y0 + chartH, y0]);
  const syRip = linearScale([0, ripMax * 1.15], [y0 + chartH, y0]);

  const group = chartW / rows.length;
  const barW = Math.min(40, group * 0.3);
  const pieces: string[] = [];
  pieces.push(`<rect x="${x0}" y="${y0}" width="${chartW}" height="${chartH}" fill="white" stroke="#999"/>`);
  for (const t of ticks(syRec.domain)) {
    pieces.push(`<text x="${x0 - 6}" y="${(syRec(t) + 3).toFixed(2)}" text-anchor="end" font-size="10">${fmt(t)}</text>`);
  }
  for (const t of ticks(syRip.domain)) {
    pieces.push(`<text x="${x0 + chartW + 6}" y="${(syRip(t) + 3).toFixed(2)}" font-size="10">${fmt(t)}</text>`);
  }

  rows.forEach((row, i) => {
    const cx = x0 + group * (i + 0.5);
    if (row.error !== "") {
      pieces.push(`<text x="${cx}" y="${y0 + chartH / 2}" text-anchor="middle" font-size="10" fill="#b00">failed</text>`);
    } else {
      if (row.recovered) {
        const h = y0 + chartH - syRec(recoveries[i]);
        pieces.push(bar(cx - barW - 2, syRec(recoveries[i]), barW, h, "#1f77b4"));
      } else {
        pieces.push(`<text x="${cx - barW / 2 - 2}" y="${y0 + 14}" text-anchor="middle" font-size="9" fill="#1f77b4">no rec.</text>`);
      }
      const h2 = y0 + chartH - syRip(ripples[i]);
      pieces.push(bar(cx + 2, syRip(ripples[i]), barW, h2, "#ff7f0e"));
    }
    pieces.push(`<text x="${cx}" y="${y0 + chartH + 16}" text-anchor="middle" font-size="10">${row.scenario}</text>`);
  });

  pieces.push(`<text x="${x0 - 48}" y="${y0 + chartH / 2}" font-size="11" text-anchor="middle" transform="rotate(-90 ${x0 - 48} ${y0 + chartH / 2})">recovery time [ms]</text>`);
  pieces.push(`<text x="${x0 + chartW + 58}" y="${y0 + chartH / 2}" font-size="11" text-anchor="middle" transform="rotate(90 ${x0 + chartW + 58} ${y0 + chartH / 2})">output ripple [mV p-p]</text>`);
  pieces.push(legend(x0 + 10, height - 28, [
    { color: "#1f77b4", label: "recovery time" },
    { color: "#ff7f0e", label: "ripple (final window)" },
  ]));
  return svgDocument(width, height, pieces.join("\n"), opts.title ?? "Component-variation sweep");
}
