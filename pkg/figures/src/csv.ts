/**
 * Reader for the run CSVs produced by the decopt harness.
 *
 * This tool never re-computes metrics; it strictly renders what the runner
 * logged, so the header must match the runner's format exactly.
 */

export const METRICS_HEADER =
  "iter,comm_rounds,grad_eval_rounds,sample_grad_evals," +
  "gap,consensus_error,avg_grad_norm_sq,avg_cost,epoch,status";

export const X_AXES = ["iter", "comm_rounds", "grad_eval_rounds", "epoch"] as const;
export type XAxis = (typeof X_AXES)[number];

export interface RunRow {
  iter: number;
  comm_rounds: number;
  grad_eval_rounds: number;
  sample_grad_evals: number;
  gap: number;
  consensus_error: number;
  avg_grad_norm_sq: number;
  avg_cost: number;
  epoch: number;
  status: string;
}

export const NUMERIC_FIELDS = [
  "iter", "comm_rounds", "grad_eval_rounds", "sample_grad_evals",
  "gap", "consensus_error", "avg_grad_norm_sq", "avg_cost", "epoch",
] as const;
export type NumericField = (typeof NUMERIC_FIELDS)[number];

/** Python's %.17g renders non-finite floats as inf/-inf/nan. */
function parseValue(raw: string): number {
  switch (raw) {
    case "inf": return Infinity;
    case "-inf": return -Infinity;
    case "nan": return NaN;
    default: return Number(raw);
  }
}

export function parseRunCsv(text: string, source: string): RunRow[] {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0 || lines[0] !== METRICS_HEADER) {
    throw new Error(`${source}: missing or mismatched metrics header`);
  }
  if (lines.length === 1) {
    throw new Error(`${source}: no data rows`);
  }
  return lines.slice(1).map((line, i) => {
    const f = line.split(",");
    if (f.length !== 10) {
      throw new Error(`${source}: malformed row ${i + 1}`);
    }
    return {
      iter: parseValue(f[0]),
      comm_rounds: parseValue(f[1]),
      grad_eval_rounds: parseValue(f[2]),
      sample_grad_evals: parseValue(f[3]),
      gap: parseValue(f[4]),
      consensus_error: parseValue(f[5]),
      avg_grad_norm_sq: parseValue(f[6]),
      avg_cost: parseValue(f[7]),
      epoch: parseValue(f[8]),
      status: f[9],
    };
  });
}
