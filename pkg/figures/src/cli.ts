#!/usr/bin/env node
/**
 * plot --out FILE --x AXIS [--y FIELD] CSV:LABEL [CSV:LABEL ...]
 *
 * Renders one log-scale SVG convergence chart, one curve per run CSV.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { parseArgs } from "node:util";

import { renderLogChart, curvesFrom } from "./chart.js";
import { NUMERIC_FIELDS, NumericField, parseRunCsv, X_AXES, XAxis } from "./csv.js";

const USAGE =
  "usage: plot --out FILE --x {iter|comm_rounds|grad_eval_rounds|epoch} " +
  "[--y FIELD] CSV:LABEL [CSV:LABEL ...]";

function splitSpec(spec: string): { path: string; label: string } {
  const cut = spec.lastIndexOf(":");
  if (cut <= 0 || cut === spec.length - 1) {
    throw new Error(`expected CSV:LABEL, got ${spec}`);
  }
  return { path: spec.slice(0, cut), label: spec.slice(cut + 1) };
}

export function main(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      options: {
        out: { type: "string" },
        x: { type: "string", default: "iter" },
        y: { type: "string", default: "gap" },
      },
      allowPositionals: true,
    });
  } catch (err) {
    console.error(`${(err as Error).message}\n${USAGE}`);
    return 1;
  }
  const { out, x, y } = parsed.values as { out?: string; x: string; y: string };
  try {
    if (!out) throw new Error("--out FILE is required");
    if (!(X_AXES as readonly string[]).includes(x)) {
      throw new Error(`--x must be one of ${X_AXES.join(", ")}`);
    }
    if (!(NUMERIC_FIELDS as readonly string[]).includes(y)) {
      throw new Error(`--y must be one of ${NUMERIC_FIELDS.join(", ")}`);
    }
    if (parsed.positionals.length === 0) {
      throw new Error("at least one CSV:LABEL is required");
    }
    const runs = parsed.positionals.map((spec) => {
      const { path, label } = splitSpec(spec);
      return { label, rows: parseRunCsv(readFileSync(path, "utf-8"), path) };
    });
    const curves = curvesFrom(runs, x as XAxis, y as NumericField);
    const svg = renderLogChart(curves, { xLabel: x, yLabel: y });
    writeFileSync(out, svg);
    console.log(`wrote ${out} (${curves.length} curves)`);
    return 0;
  } catch (err) {
    console.error(`plot: ${(err as Error).message}\n${USAGE}`);
    return 1;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
