/**
 * Readers for the two CSV files the simulator exports.
 *
 * Trace files: a `# key=value` metadata comment, a header row, then one
 * row per microsecond.  Metrics files: one header row, one row per
 * scenario.  Both are validated against their schemas up front so a
 * malformed file fails with the missing column or bad cell named.
 */

export class SchemaError extends Error {}

export const TRACE_COLUMNS = [
  "time_s",
  "gate",
  "duty",
  "i_L_A",
  "v_out_V",
  "v_obs_V",
  "action",
  "reward",
] as const;

export type TraceColumn = (typeof TRACE_COLUMNS)[number];

export interface Trace {
  meta: { variant: string; vRef: number; dt: number };
  /** column name -> values; NaN cells come through as NaN */
  columns: Record<TraceColumn, Float64Array>;
  length: number;
}

export interface MetricsRow {
  scenario: string;
  vMin: number;
  vMax: number;
  recovered: boolean;
  recoveryS: number;
  settled: boolean;
  settlingS: number;
  overshoot: number;
  ripplePp: number;
  switchingHz: number;
  meanAbsErr: number;
  error: string;
}

const METRICS_COLUMNS = [
  "scenario",
  "v_min",
  "v_max",
  "recovered",
  "recovery_s",
  "settled",
  "settling_s",
  "overshoot",
  "ripple_pp",
  "switching_hz",
  "mean_abs_err",
  "error",
] as const;

function splitRows(text: string): string[] {
  return text
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
}

export function parseTrace(text: string, source = "<trace>"): Trace {
  const meta = { variant: "dgc", vRef: 15.0, dt: 1e-6 };
  const lines = splitRows(text);
  let headerIdx = 0;
  while (headerIdx < lines.length && lines[headerIdx].startsWith("#")) {
    for (const token of lines[headerIdx].slice(1).trim().split(/\s+/)) {
      const [key, value] = token.split("=");
      if (key === "variant") meta.variant = value;
      else if (key === "v_ref") meta.vRef = Number(value);
      else if (key === "dt") meta.dt = Number(value);
    }
    headerIdx += 1;
  }
  if (headerIdx >= lines.length) {
    throw new SchemaError(`${source}: no header row found`);
  }
  const header = lines[headerIdx].split(",").map((h) => h.trim());
  const index = new Map<string, number>();
  header.forEach((name, i) => index.set(name, i));
  for (const column of TRACE_COLUMNS) {
    if (!index.has(column)) {
      throw new SchemaError(`${source}: missing column '${column}'`);
    }
  }
  const rows = lines.slice(headerIdx + 1);
  const columns = Object.fromEntries(
    TRACE_COLUMNS.map((c) => [c, new Float64Array(rows.length)]),
  ) as Record<TraceColumn, Float64Array>;
  rows.forEach((row, r) => {
    const cells = row.split(",");
    if (cells.length < header.length) {
      throw new SchemaError(`${source}: row ${r + 1} has ${cells.length} cells, expected ${header.length}`);
    }
    for (const column of TRACE_COLUMNS) {
      const cell = cells[index.get(column)!];
      const value = Number(cell);
      if (Number.isNaN(value) && cell.trim().toLowerCase() !== "nan") {
        throw new SchemaError(`${source}: row ${r + 1}, column '${column}': not a number (${cell})`);
      }
      columns[column][r] = value;
    }
  });
  return { meta, columns, length: rows.length };
}

export function parseMetrics(text: string, source = "<metrics>"): MetricsRow[] {
  const lines = splitRows(text).filter((line) => !line.startsWith("#"));
  if (lines.length === 0) {
    throw new SchemaError(`${source}: empty file`);
  }
  const header = lines[0].split(",").map((h) => h.trim());
  const index = new Map<string, number>();
  header.forEach((name, i) => index.set(name, i));
  for (const column of METRICS_COLUMNS) {
    if (!index.has(column)) {
      throw new SchemaError(`${source}: missing column '${column}'`);
    }
  }
  if (lines.length === 1) {
    throw new SchemaError(`${source}: table has no data rows`);
  }
  const cell = (cells: string[], name: string) => cells[index.get(name)!] ?? "";
  const num = (cells: string[], name: string, row: number): number => {
    const raw = cell(cells, name).trim();
    const value = Number(raw);
    if (raw === "" || (Number.isNaN(value) && raw.toLowerCase() !== "nan")) {
      throw new SchemaError(`${source}: row ${row}, column '${name}': not a number (${raw})`);
    }
    return value;
  };
  return lines.slice(1).map((line, r) => {
    const cells = line.split(",");
    const errorText = cell(cells, "error").trim();
    if (errorText !== "") {
      return {
        scenario: cell(cells, "scenario"),
        vMin: NaN, vMax: NaN, recovered: false, recoveryS: NaN,
        settled: false, settlingS: NaN, overshoot: NaN, ripplePp: NaN,
        switchingHz: NaN, meanAbsErr: NaN, error: errorText,
      };
    }
    return {
      scenario: cell(cells, "scenario"),
      vMin: num(cells, "v_min", r + 1),
      vMax: num(cells, "v_max", r + 1),
      recovered: cell(cells, "recovered").trim() === "True",
      recoveryS: num(cells, "recovery_s", r + 1),
      settled: cell(cells, "settled").trim() === "True",
      settlingS: num(cells, "settling_s", r + 1),
      overshoot: num(cells, "overshoot", r + 1),
      ripplePp: num(cells, "ripple_pp", r + 1),
      switchingHz: num(cells, "switching_hz", r + 1),
      meanAbsErr: num(cells, "mean_abs_err", r + 1),
      error: "",
    };
  });
}
