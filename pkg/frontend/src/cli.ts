#!/usr/bin/env node
/**
 * plotkit <spec file>
 *
 * Reads a JSON plot spec, renders the figure, writes the SVG.
 * Exit codes: 0 ok, 1 unexpected error, 2 usage, 3 spec or input
 * schema rejected (the offending column is named), 4 no rows to
 * draw, 5 output not writable.
 */

import { mkdirSync, writeFileSync } from "fs";
import { dirname } from "path";
import { pathToFileURL } from "url";

import { render } from "./plots.js";
import { NoRowsError, SchemaError } from "./schema.js";
import { SpecError, loadSpec } from "./spec.js";

export const EXIT_OK = 0;
export const EXIT_ERROR = 1;
export const EXIT_USAGE = 2;
export const EXIT_SCHEMA = 3;
export const EXIT_NO_ROWS = 4;
export const EXIT_UNWRITABLE = 5;

export function main(argv: string[]): number {
  if (argv.length !== 1 || argv[0] === "-h" || argv[0] === "--help") {
    const to = argv.length === 1 ? process.stdout : process.stderr;
    to.write("usage: plotkit <spec file>\n");
    return argv.length === 1 ? EXIT_OK : EXIT_USAGE;
  }
  let svg: string;
  let output: string;
  try {
    const spec = loadSpec(argv[0]);
    output = spec.output;
    svg = render(spec);
  } catch (err) {
    if (err instanceof NoRowsError) {
      process.stderr.write(`plotkit: no rows: ${err.message}\n`);
      return EXIT_NO_ROWS;
    }
    if (err instanceof SchemaError || err instanceof SpecError) {
      process.stderr.write(`plotkit: ${err.message}\n`);
      return EXIT_SCHEMA;
    }
    if ((err as NodeJS.ErrnoException).code === "ENOENT") {
      process.stderr.write(`plotkit: ${(err as Error).message}\n`);
      return EXIT_SCHEMA;
    }
    process.stderr.write(`plotkit: ${(err as Error).message}\n`);
    return EXIT_ERROR;
  }
  try {
    const dir = dirname(output);
    if (dir !== ".") mkdirSync(dir, { recursive: true });
    writeFileSync(output, svg);
  } catch (err) {
    process.stderr.write(`plotkit: cannot write ${output}: ${(err as Error).message}\n`);
    return EXIT_UNWRITABLE;
  }
  process.stdout.write(`wrote ${output}\n`);
  return EXIT_OK;
}

if (
  typeof process.argv[1] === "string" &&
  import.meta.url === pathToFileURL(process.argv[1]).href
) {
  process.exit(main(process.argv.slice(2)));
}
