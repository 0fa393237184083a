/**
 * Readers for the experiment output files:
 *
 *   - metric-trace CSVs with columns
 *     method,surrogate,d,seed,N_eval,rmse_mean,rmse_var,wasserstein,ess_per_eval
 *   - skeleton dumps with columns k,t,kind,xi_1..xi_d,v_1..v_d
 */
import { readFileSync, readdirSync, statSync } from "fs";
import path from "path";

export interface TraceRow {
  method: string;
  surrogate: string;
  d: number;
  seed: number;
  nEval: number;
  rmseMean: number;
  rmseVar: number;
  wasserstein: number;
  essPerEval: number;
}

export interface SkeletonEvent {
  k: number;
  t: number;
  kind: string;
  xi: number[];
  v: number[];
}

const TRACE_COLUMNS = [
  "method",
  "surrogate",
  "d",
  "seed",
  "N_eval",
  "rmse_mean",
  "rmse_var",
  "wasserstein",
  "ess_per_eval",
];

export function parseCsv(text: string): string[][] {
  return text
    .split(/\r?\n/)
    .filter((line) => line.trim().length > 0)
    .map((line) => line.split(","));
}

export function readTraceCsv(file: string): TraceRow[] {
  const rows = parseCsv(readFileSync(file, "utf8"));
  if (rows.length === 0) {
    throw new Error(`${file}: empty trace CSV`);
  }
  const header = rows[0];
  const idx = new Map(header.map((c, i) => [c, i]));
  for (const col of TRACE_COLUMNS) {
    if (!idx.has(col)) {
      throw new Error(`${file}: missing required column '${col}'`);
    }
  }
  const get = (row: string[], col: string) => row[idx.get(col)!];
  return rows.slice(1).map((row) => ({
    method: get(row, "method"),
    surrogate: get(row, "surrogate"),
    d: Number(get(row, "d")),
    seed: Number(get(row, "seed")),
    nEval: Number(get(row, "N_eval")),
    rmseMean: Number(get(row, "rmse_mean")),
    rmseVar: Number(get(row, "rmse_var")),
    wasserstein: Number(get(row, "wasserstein")),
    essPerEval: Number(get(row, "ess_per_eval")),
  }));
}

/** All trace rows under a sweep directory (any *.csv except skeleton dumps). */
export function readTraceDir(dir: string): TraceRow[] {
  const rows: TraceRow[] = [];
  for (const name of readdirSync(dir).sort()) {
    const full = path.join(dir, name);
    if (!statSync(full).isFile()) continue;
    if (!name.endsWith(".csv") || name.startsWith("skeleton_")) continue;
    rows.push(...readTraceCsv(full));
  }
  return rows;
}

export function readSkeletonCsv(file: string): SkeletonEvent[] {
  const rows = parseCsv(readFileSync(file, "utf8"));
  if (rows.length < 2) {
    throw new Error(`${file}: skeleton CSV has no events`);
  }
  const header = rows[0];
  const dims = header.filter((c) => c.startsWith("xi_")).length;
  if (dims === 0 || header[0] !== "k" || header[1] !== "t") {
    throw new Error(`${file}: malformed skeleton header`);
  }
  return rows.slice(1).map((row) => ({
    k: Number(row[0]),
    t: Number(row[1]),
    kind: row[2],
    xi: row.slice(3, 3 + dims).map(Number),
    v: row.slice(3 + dims, 3 + 2 * dims).map(Number),
  }));
}
