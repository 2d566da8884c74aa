import { mkdtempSync, writeFileSync } from "fs";
import { tmpdir } from "os";
import { join, resolve } from "path";
import { describe, expect, it, vi } from "vitest";

import { main } from "../src/cli.js";

function run(argv: string[]): { code: number; stderr: string } {
  let stderr = "";
  const err = vi
    .spyOn(process.stderr, "write")
    .mockImplementation(((chunk: any) => {
      stderr += String(chunk);
      return true;
    }) as any);
  const out = vi
    .spyOn(process.stdout, "write")
    .mockImplementation((() => true) as any);
  try {
    return { code: main(argv), stderr };
  } finally {
    err.mockRestore();
    out.mockRestore();
  }
}

function tmpSpec(overrides: Record<string, unknown>): string {
  const dir = mkdtempSync(join(tmpdir(), "plotkit-cli-"));
  const spec = {
    input: resolve("golden/two-point.csv"),
    kind: "loglog",
    fit: true,
    output: join(dir, "fig.svg"),
    ...overrides,
  };
  const p = join(dir, "spec.json");
  writeFileSync(p, JSON.stringify(spec));
  return p;
}

describe("plotkit exit codes", () => {
  it("no arguments is a usage error", () => {
    expect(run([]).code).toBe(2);
  });

  it("two arguments is a usage error", () => {
    expect(run(["a", "b"]).code).toBe(2);
  });

  it("--help alone succeeds", () => {
    expect(run(["--help"]).code).toBe(0);
  });

  it("missing spec file exits 3", () => {
    const r = run(["/nonexistent/spec.json"]);
    expect(r.code).toBe(3);
    expect(r.stderr).toContain("cannot read spec");
  });

  it("missing input CSV exits 3", () => {
    const r = run([tmpSpec({ input: "/nonexistent/run.csv" })]);
    expect(r.code).toBe(3);
  });

  it("schema violation names the column", () => {
    const dir = mkdtempSync(join(tmpdir(), "plotkit-bad-"));
    const csv = join(dir, "bad.csv");
    writeFileSync(
      csv,
      "experiment,statistic,r,estimate,stderr,ci_lo,ci_hi,n_samples,seed,code_version\n" +
        "two-point,connect_prob,2,oops,0.01,0.08,0.12,100,1,0.1.0\n",
    );
    const r = run([tmpSpec({ input: csv })]);
    expect(r.code).toBe(3);
    expect(r.stderr).toContain("'estimate'");
  });

  it("unwritable output exits 5", () => {
    const r = run([tmpSpec({ output: "/proc/version/fig.svg" })]);
    expect(r.code).toBe(5);
  });

  it("a good spec writes the figure and exits 0", () => {
    const p = tmpSpec({});
    expect(run([p]).code).toBe(0);
  });
});
