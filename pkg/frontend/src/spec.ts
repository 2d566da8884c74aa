/**
 * PlotSpec: the JSON file a figure is built from.
 *
 * Row selection (which statistic, which parameter is the x axis, what
 * splits the series) can be stated explicitly or left to a small
 * registry of known emitters, keyed by the experiment name the CSV
 * itself carries.
 */

import { readFileSync } from "fs";
import { z } from "zod";

import type { Table } from "./schema.js";
import { SchemaError } from "./schema.js";

export class SpecError extends Error {}

const specSchema = z
  .object({
    input: z.union([z.string(), z.array(z.string()).nonempty()]),
    kind: z.enum(["loglog", "tail", "ratio"]),
    statistic: z.string().optional(),
    x: z.string().optional(),
    series: z.string().optional(),
    xlabel: z.string().optional(),
    ylabel: z.string().optional(),
    title: z.string().optional(),
    fit: z.boolean().default(false),
    fitStatistic: z.string().optional(),
    output: z.string(),
  })
  .strict();

export type PlotKind = "loglog" | "tail" | "ratio";
export type PlotSpec = z.infer<typeof specSchema>;

export function loadSpec(path: string): PlotSpec {
  let text: string;
  try {
    text = readFileSync(path, "utf8");
  } catch (err) {
    throw new SpecError(`cannot read spec ${path}: ${(err as Error).message}`);
  }
  let data: unknown;
  try {
    data = JSON.parse(text);
  } catch (err) {
    throw new SpecError(`${path}: not JSON: ${(err as Error).message}`);
  }
  const result = specSchema.safeParse(data);
  if (!result.success) {
    const issue = result.error.issues[0];
    const where = issue.path.length ? issue.path.join(".") : "spec";
    throw new SpecError(`${path}: ${where}: ${issue.message}`);
  }
  return result.data;
}

export function inputPaths(spec: PlotSpec): string[] {
  return typeof spec.input === "string" ? [spec.input] : spec.input;
}

interface Selection {
  statistic: string;
  x: string;
  series?: string;
  fitStatistic?: string;
}

// known emitters: how each experiment's CSV maps onto each plot kind
const REGISTRY: Record<string, Partial<Record<PlotKind, Selection>>> = {
  "two-point": {
    loglog: { statistic: "connect_prob", x: "r", fitStatistic: "fit_power" },
    ratio: { statistic: "connect_scaled", x: "r" },
  },
  "lerw-length": {
    tail: { statistic: "length_upper_tail", x: "lam", series: "N" },
    ratio: { statistic: "mean_length_over_n2", x: "N" },
  },
  "box-volume": {
    tail: { statistic: "volume_lower_tail", x: "lam", series: "N" },
    ratio: { statistic: "volume_median_over_n4", x: "N" },
  },
};

/** Fill the selection fields from the registry where the spec is
 *  silent, then check the chosen columns against the table. */
export function resolveSelection(spec: PlotSpec, table: Table): Selection {
  const experiment = table.rows[0].experiment;
  const known = REGISTRY[experiment]?.[spec.kind];
  const statistic = spec.statistic ?? known?.statistic;
  const x = spec.x ?? known?.x;
  const series = spec.series ?? known?.series;
  const fitStatistic = spec.fitStatistic ?? known?.fitStatistic;
  if (!statistic || !x) {
    throw new SpecError(
      `experiment '${experiment}' is not a known emitter for kind '${spec.kind}'; ` +
        `the spec must name 'statistic' and 'x'`,
    );
  }
  if (!table.paramColumns.includes(x)) {
    throw new SchemaError(
      `x column '${x}' is not a parameter column of ${table.sources[0]} ` +
        `(has: ${table.paramColumns.join(", ")})`,
      x,
    );
  }
  if (series && !table.paramColumns.includes(series)) {
    throw new SchemaError(
      `series column '${series}' is not a parameter column of ${table.sources[0]}`,
      series,
    );
  }
  return { statistic, x, series, fitStatistic };
}
