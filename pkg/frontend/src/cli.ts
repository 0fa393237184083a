#!/usr/bin/env npx tsx
/**
 * Figure CLI for barpdmp sweep output.
 *
 * Usage:
 *   tsx src/cli.ts convergence --input <sweep-dir> --metric rmse_mean --out fig.svg
 *   tsx src/cli.ts ess         --input <sweep-dir> --out fig.svg
 *   tsx src/cli.ts skeleton    --input <skeleton.csv> --out fig.svg [--title T]
 *   tsx src/cli.ts all         --input <sweep-dir> --out-dir <dir>
 */
import { mkdirSync, readdirSync } from "fs";
import path from "path";
import { MetricName } from "./aggregate.js";
import { readSkeletonCsv, readTraceDir } from "./csv.js";
import { renderEssScaling, writeConvergence } from "./convergence.js";
import { writeSkeleton } from "./skeleton.js";
import { writeFileSync } from "fs";

const METRICS: MetricName[] = ["rmse_mean", "rmse_var", "wasserstein", "ess_per_eval"];

function parseArgs(argv: string[]): { command: string; options: Map<string, string> } {
  const [command, ...rest] = argv;
  const options = new Map<string, string>();
  for (let i = 0; i < rest.length; i += 2) {
    if (!rest[i].startsWith("--") || i + 1 >= rest.length) {
      throw new Error(`malformed option near '${rest[i]}'`);
    }
    options.set(rest[i].slice(2), rest[i + 1]);
  }
  return { command, options };
}

function require(options: Map<string, string>, key: string): string {
  const value = options.get(key);
  if (!value) throw new Error(`missing required option --${key}`);
  return value;
}

export function main(argv: string[]): number {
  const { command, options } = parseArgs(argv);
  switch (command) {
    case "convergence": {
      const rows = readTraceDir(require(options, "input"));
      const metric = (options.get("metric") ?? "rmse_mean") as MetricName;
      if (!METRICS.includes(metric)) {
        throw new Error(`unknown metric '${metric}'`);
      }
      writeConvergence(rows, { metric, title: options.get("title") }, require(options, "out"));
      return 0;
    }
    case "ess": {
      const rows = readTraceDir(require(options, "input"));
      writeFileSync(require(options, "out"), renderEssScaling(rows));
      return 0;
    }
    case "skeleton": {
      const events = readSkeletonCsv(require(options, "input"));
      writeSkeleton(events, { title: options.get("title") }, require(options, "out"));
      return 0;
    }
    case "all": {
      const input = require(options, "input");
      const outDir = require(options, "out-dir");
      mkdirSync(outDir, { recursive: true });
      const rows = readTraceDir(input);
      for (const metric of METRICS) {
        writeConvergence(
          rows,
          { metric, title: path.basename(input) },
          path.join(outDir, `convergence_${metric}.svg`),
        );
      }
      writeFileSync(path.join(outDir, "ess_scaling.svg"), renderEssScaling(rows));
      for (const name of readdirSync(input).sort()) {
        if (name.startsWith("skeleton_") && name.endsWith(".csv")) {
          const events = readSkeletonCsv(path.join(input, name));
          writeSkeleton(
            events,
            { title: name.replace(/^skeleton_/, "").replace(/\.csv$/, "") },
            path.join(outDir, name.replace(/\.csv$/, ".svg")),
          );
        }
      }
      return 0;
    }
    default:
      console.error(
        "usage: cli.ts <convergence|ess|skeleton|all> --input PATH --out FILE [--metric M] [--out-dir DIR]",
      );
      return 1;
  }
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("cli.ts") || entry.endsWith("cli.js")) {
  try {
    process.exitCode = main(process.argv.slice(2));
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    process.exitCode = 1;
  }
}
