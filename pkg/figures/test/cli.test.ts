import { existsSync, readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { main } from "../src/cli.js";
import { decayingGaps, makeRunCsv, tempDir } from "./helpers.js";

// CSVs written by the primary package's acceptance run, when present;
// otherwise synthetic equivalents with the same header and shape
const ACCEPTANCE_DIR = join(
  fileURLToPath(new URL(".", import.meta.url)), "..", "..", "out", "acceptance");

function batchComparisonSpecs(dir: string): string[] {
  const algos = ["dgd", "prox_gpda", "extra", "gt", "xfilter"];
  return algos.map((a, i) => {
    const real = join(ACCEPTANCE_DIR, `set1_${a}_rep0.csv`);
    if (existsSync(real)) return `${real}:${a}`;
    return `${makeRunCsv(dir, `set1_${a}.csv`, decayingGaps(80, 0.72 + 0.04 * i))}:${a}`;
  });
}

function heterogeneitySpecs(dir: string): string[] {
  return ["dsgd", "gnsd"].map((a, i) => {
    const real = join(ACCEPTANCE_DIR, `hetero_${a}_m256_rep0.csv`);
    if (existsSync(real)) return `${real}:${a}`;
    return `${makeRunCsv(dir, `het_${a}.csv`,
      decayingGaps(50, 0.8, 1.0 + i))}:${a}`;
  });
}

describe("plot CLI", () => {
  it("renders the five-curve batch comparison figure", () => {
    const dir = tempDir();
    const out = join(dir, "set1.svg");
    const code = main(["--out", out, "--x", "grad_eval_rounds",
      ...batchComparisonSpecs(dir)]);
    expect(code).toBe(0);
    const svg = readFileSync(out, "utf-8");
    expect((svg.match(/<polyline/g) ?? []).length).toBe(5);
    expect(svg).toContain("xfilter");
  });

  it("renders the two-curve heterogeneity figure", () => {
    const dir = tempDir();
    const out = join(dir, "hetero.svg");
    const code = main(["--out", out, "--x", "iter", ...heterogeneitySpecs(dir)]);
    expect(code).toBe(0);
    const svg = readFileSync(out, "utf-8");
    expect((svg.match(/<polyline/g) ?? []).length).toBe(2);
  });

  it("supports the epoch axis and a different y field", () => {
    const dir = tempDir();
    const csv = makeRunCsv(dir, "e.csv", decayingGaps(20, 0.5));
    const out = join(dir, "e.svg");
    expect(main(["--out", out, "--x", "epoch", "--y", "consensus_error",
      `${csv}:run`])).toBe(0);
    expect(readFileSync(out, "utf-8")).toContain("consensus_error");
  });

  it("errors out on a mismatched header", () => {
    const dir = tempDir();
    const bad = join(dir, "bad.csv");
    writeFileSync(bad, "iter,gap\n0,1\n");
    expect(main(["--out", join(dir, "o.svg"), "--x", "iter", `${bad}:x`]))
      .toBe(1);
  });

  it("errors out on bad usage", () => {
    const dir = tempDir();
    const csv = makeRunCsv(dir, "u.csv", [1.0, 0.5]);
    expect(main(["--x", "iter", `${csv}:x`])).toBe(1);           // no --out
    expect(main(["--out", join(dir, "o.svg"), "--x", "time",
      `${csv}:x`])).toBe(1);                                     // bad axis
    expect(main(["--out", join(dir, "o.svg"), "--x", "iter"])).toBe(1);
    expect(main(["--out", join(dir, "o.svg"), "--x", "iter",
      "nolabel"])).toBe(1);
  });
});
