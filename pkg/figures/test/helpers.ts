import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { METRICS_HEADER } from "../src/csv.js";

export function tempDir(): string {
  return mkdtempSync(join(tmpdir(), "figures-"));
}

/** Synthesize a run CSV with the exact harness header. */
export function makeRunCsv(
  dir: string,
  name: string,
  gaps: Array<number | "inf" | "nan">,
  status = "running",
): string {
  const rows = gaps.map((g, t) => {
    const gap = typeof g === "number" ? g.toExponential(16) : g;
    return [t, t, t, t * 8, gap, gap, 0, 0.5, t / 4, status].join(",");
  });
  const path = join(dir, name);
  writeFileSync(path, [METRICS_HEADER, ...rows].join("\n") + "\n");
  return path;
}

export function decayingGaps(n: number, rate: number, start = 1.0): number[] {
  return Array.from({ length: n }, (_, t) => start * Math.pow(rate, t));
}
