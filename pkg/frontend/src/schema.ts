/**
 * The CSV side of the contract with the experiment runner.
 *
 * Every run emits one row per statistic with two fixed leading
 * columns, a block of experiment-specific parameter columns, and
 * seven fixed trailing columns. Files that do not match abort with
 * the offending column named; nothing is coerced silently.
 */

import { readFileSync } from "fs";
import Papa from "papaparse";

export const LEADING = ["experiment", "statistic"] as const;
export const TRAILING = [
  "estimate",
  "stderr",
  "ci_lo",
  "ci_hi",
  "n_samples",
  "seed",
  "code_version",
] as const;

export class SchemaError extends Error {
  readonly column: string;
  constructor(message: string, column: string) {
    super(message);
    this.column = column;
  }
}

export class NoRowsError extends Error {}

export interface Row {
  experiment: string;
  statistic: string;
  /** parameter cells by column name, verbatim text ("" when blank) */
  params: Record<string, string>;
  estimate: number;
  stderr: number;
  ciLo: number;
  ciHi: number;
  nSamples: number;
  seed: string;
  codeVersion: string;
  /** every cell of the row, verbatim, keyed by column */
  cells: Record<string, string>;
}

export interface Table {
  columns: string[];
  paramColumns: string[];
  rows: Row[];
  sources: string[];
}

function parseNumberCell(raw: string, column: string, line: number): number {
  const value = Number(raw);
  if (raw.trim() === "" || !Number.isFinite(value)) {
    throw new SchemaError(
      `line ${line}: column '${column}' holds '${raw}', expected a finite number`,
      column,
    );
  }
  return value;
}

function checkHeader(header: string[], source: string): string[] {
  for (let i = 0; i < LEADING.length; i++) {
    if (header[i] !== LEADING[i]) {
      throw new SchemaError(
        `${source}: column ${i + 1} is '${header[i] ?? ""}', expected '${LEADING[i]}'`,
        LEADING[i],
      );
    }
  }
  const tail = header.slice(header.length - TRAILING.length);
  for (let i = 0; i < TRAILING.length; i++) {
    if (tail[i] !== TRAILING[i]) {
      throw new SchemaError(
        `${source}: trailing columns end '${tail.join(",")}', expected '${TRAILING.join(",")}'`,
        TRAILING[i],
      );
    }
  }
  return header.slice(LEADING.length, header.length - TRAILING.length);
}

export function parseTable(text: string, source: string): Table {
  if (text.trim() === "") {
    throw new NoRowsError(`${source}: no rows`);
  }
  const parsed = Papa.parse<string[]>(text, {
    delimiter: ",",
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const e = parsed.errors[0];
    throw new SchemaError(`${source}: ${e.message}`, "");
  }
  const grid = parsed.data;
  if (grid.length === 0) {
    throw new NoRowsError(`${source}: no rows`);
  }
  const header = grid[0];
  if (header.length < LEADING.length + TRAILING.length) {
    throw new SchemaError(
      `${source}: ${header.length} columns, need at least ${LEADING.length + TRAILING.length}`,
      "experiment",
    );
  }
  const paramColumns = checkHeader(header, source);

  const rows: Row[] = [];
  for (let i = 1; i < grid.length; i++) {
    const line = i + 1;
    const raw = grid[i];
    if (raw.length !== header.length) {
      throw new SchemaError(
        `${source}: line ${line} has ${raw.length} cells, header has ${header.length}`,
        header[Math.min(raw.length, header.length) - 1],
      );
    }
    const cells: Record<string, string> = {};
    header.forEach((col, j) => (cells[col] = raw[j]));
    const params: Record<string, string> = {};
    for (const col of paramColumns) params[col] = cells[col];
    rows.push({
      experiment: cells.experiment,
      statistic: cells.statistic,
      params,
      estimate: parseNumberCell(cells.estimate, "estimate", line),
      stderr: parseNumberCell(cells.stderr, "stderr", line),
      ciLo: parseNumberCell(cells.ci_lo, "ci_lo", line),
      ciHi: parseNumberCell(cells.ci_hi, "ci_hi", line),
      nSamples: parseNumberCell(cells.n_samples, "n_samples", line),
      seed: cells.seed,
      codeVersion: cells.code_version,
      cells,
    });
  }
  if (rows.length === 0) {
    throw new NoRowsError(`${source}: no rows`);
  }
  return { columns: header, paramColumns, rows, sources: [source] };
}

/** Read one or more CSVs and concatenate them into a single table.
 *  All files must agree on the column set and the experiment name:
 *  merging different emitters would scramble the parameter columns. */
export function readTables(paths: string[]): Table {
  const tables = paths.map((p) => parseTable(readFileSync(p, "utf8"), p));
  const first = tables[0];
  for (const t of tables.slice(1)) {
    if (t.columns.length !== first.columns.length) {
      throw new SchemaError(
        `${t.sources[0]}: ${t.columns.length} columns, ${first.sources[0]} has ${first.columns.length}`,
        t.columns[Math.min(t.columns.length, first.columns.length) - 1] ?? "",
      );
    }
    for (let i = 0; i < first.columns.length; i++) {
      if (t.columns[i] !== first.columns[i]) {
        throw new SchemaError(
          `${t.sources[0]}: column ${i + 1} is '${t.columns[i]}', ${first.sources[0]} has '${first.columns[i]}'`,
          first.columns[i],
        );
      }
    }
  }
  const experiment = first.rows[0].experiment;
  const rows: Row[] = [];
  for (const t of tables) {
    for (const row of t.rows) {
      if (row.experiment !== experiment) {
        throw new SchemaError(
          `all inputs must come from one experiment; saw '${row.experiment}' and '${experiment}'`,
          "experiment",
        );
      }
      rows.push(row);
    }
  }
  return {
    columns: first.columns,
    paramColumns: first.paramColumns,
    rows,
    sources: paths.slice(),
  };
}
