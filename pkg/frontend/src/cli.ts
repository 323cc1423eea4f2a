#!/usr/bin/env node
/**
 * buckdgc-plots — render simulator CSVs to SVG figures.
 *
 *   buckdgc-plots trace A.csv [B.csv] --out fig.svg [--window t0:t1]
 *   buckdgc-plots sweep metrics.csv --out fig.svg
 *
 * `trace` draws the stacked gate/duty, current, voltage panels (two inputs
 * overlay, e.g. gate-control vs PWM); `sweep` draws the grouped
 * recovery/ripple comparison.  The time window is given in seconds
 * relative to the load step.  Exit codes: 0 ok, 1 bad input.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { basename } from "node:path";
import { parseMetrics, parseTrace, SchemaError } from "./csv.js";
import { sweepFigure, traceFigure } from "./figures.js";

interface Args {
  command: string;
  inputs: string[];
  out: string;
  window?: [number, number];
}

function parseArgs(argv: string[]): Args {
  const [command, ...rest] = argv;
  if (command !== "trace" && command !== "sweep") {
    throw new SchemaError(`usage: buckdgc-plots <trace|sweep> <csv...> --out <svg> [--window t0:t1]`);
  }
  const inputs: string[] = [];
  let out = "";
  let window: [number, number] | undefined;
  for (let i = 0; i < rest.length; i++) {
    const arg = rest[i];
    if (arg === "--out") {
      out = rest[++i] ?? "";
    } else if (arg === "--window") {
      const spec = rest[++i] ?? "";
      const [a, b] = spec.split(":").map(Number);
      if (Number.isNaN(a) || Number.isNaN(b) || b <= a) {
        throw new SchemaError(`--window expects t0:t1 seconds with t1 > t0, got '${spec}'`);
      }
      window = [a, b];
    } else if (arg.startsWith("--")) {
      throw new SchemaError(`unknown flag ${arg}`);
    } else {
      inputs.push(arg);
    }
  }
  if (inputs.length === 0) throw new SchemaError("no input CSV given");
  if (out === "") throw new SchemaError("--out is required");
  return { command, inputs, out, window };
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
    if (args.command === "trace") {
      if (args.inputs.length > 4) throw new SchemaError("at most 4 traces can be overlaid");
      const traces = args.inputs.map((path) => ({
        label: basename(path).replace(/\.csv$/, ""),
        trace: parseTrace(readFileSync(path, "utf-8"), path),
      }));
      writeFileSync(args.out, traceFigure(traces, { window: args.window }));
    } else {
      if (args.inputs.length !== 1) throw new SchemaError("sweep takes exactly one metrics CSV");
      const rows = parseMetrics(readFileSync(args.inputs[0], "utf-8"), args.inputs[0]);
      writeFileSync(args.out, sweepFigure(rows));
    }
  } catch (err) {
    if (err instanceof SchemaError || (err as NodeJS.ErrnoException).code === "ENOENT") {
      console.error(`error: ${(err as Error).message}`);
      return 1;
    }
    throw err;
  }
  console.log(`wrote ${args.out}`);
  return 0;
}

const isDirectRun = process.argv[1] !== undefined && import.meta.url.endsWith(basename(process.argv[1]));
if (isDirectRun) {
  process.exit(main(process.argv.slice(2)));
}
