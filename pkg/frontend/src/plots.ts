/**
 * From selected CSV rows to a finished SVG scene.
 *
 * Three kinds: loglog (decay curves with an optional fitted power in
 * the legend), tail (frequency curves on a log y axis), ratio
 * (scaled moments that should hug a constant). Every plotted number
 * comes from a CSV cell; the renderer only chooses geometry. Fit
 * lines in particular take their exponent from the fit row and are
 * anchored through the data centroid, which is presentation, not a
 * refit.
 */

import {
  AxisLabels,
  LegendEntry,
  MARGIN,
  HEIGHT,
  WIDTH,
  PALETTE,
  Scale,
  chrome,
  document as svgDocument,
  element,
  formatNumber,
  legend,
  linearScale,
  logScale,
  provenance,
  px,
} from "./figure.js";
import { NoRowsError, Row, SchemaError, Table, readTables } from "./schema.js";
import { PlotSpec, inputPaths, resolveSelection } from "./spec.js";

interface Pt {
  x: number;
  y: number;
  lo: number;
  hi: number;
}

interface Series {
  label: string | null;
  points: Pt[];
}

function numericParam(row: Row, column: string): number {
  const raw = row.params[column];
  const v = Number(raw);
  if (raw === undefined || raw.trim() === "" || !Number.isFinite(v)) {
    throw new SchemaError(
      `column '${column}' is '${raw ?? ""}' on a '${row.statistic}' row, expected a number`,
      column,
    );
  }
  return v;
}

function collectSeries(
  table: Table,
  statistic: string,
  xcol: string,
  seriesCol: string | undefined,
): Series[] {
  const rows = table.rows.filter((r) => r.statistic === statistic);
  if (rows.length === 0) {
    throw new NoRowsError(`no rows for statistic '${statistic}'`);
  }
  const groups = new Map<string, Pt[]>();
  for (const row of rows) {
    const key = seriesCol ? row.params[seriesCol] : "";
    const pt: Pt = {
      x: numericParam(row, xcol),
      y: row.estimate,
      lo: row.ciLo,
      hi: row.ciHi,
    };
    const bucket = groups.get(key);
    if (bucket) bucket.push(pt);
    else groups.set(key, [pt]);
  }
  const keys = [...groups.keys()].sort((a, b) => Number(a) - Number(b));
  return keys.map((key) => {
    const points = groups.get(key)!;
    points.sort((a, b) => a.x - b.x);
    return { label: seriesCol ? `${seriesCol} = ${key}` : null, points };
  });
}

/** Log axes cannot place nonpositive values; drop those points and
 *  fail only if nothing is left to draw. */
function keepPositive(series: Series[], axis: "x" | "y" | "xy"): Series[] {
  const kept = series
    .map((s) => ({
      label: s.label,
      points: s.points.filter(
        (p) =>
          (axis === "y" || p.x > 0) && (axis === "x" || p.y > 0),
      ),
    }))
    .filter((s) => s.points.length > 0);
  if (kept.length === 0) {
    throw new NoRowsError("no rows with positive values to place on a log scale");
  }
  return kept;
}

function extent(
  series: Series[],
  pick: (p: Pt) => number,
  positiveOnly: boolean,
): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const s of series) {
    for (const p of s.points) {
      const v = pick(p);
      if (positiveOnly && v <= 0) continue;
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  if (!(lo <= hi)) {
    throw new NoRowsError("no rows with positive values to place on a log scale");
  }
  if (lo === hi) {
    // a single distinct value still needs a nondegenerate axis
    return positiveOnly || lo > 0 ? [lo / 2, hi * 2] : [lo - 1, hi + 1];
  }
  return [lo, hi];
}

function clampBar(v: number, scale: Scale): number {
  const [lo, hi] = scale.domain;
  return Math.min(hi, Math.max(lo, v));
}

function drawSeries(series: Series[], xs: Scale, ys: Scale): string {
  const parts: string[] = [];
  series.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    const bars: string[] = [];
    for (const p of s.points) {
      const x = xs.pos(p.x);
      // interval endpoints at 0 are legitimate on a log axis (exact
      // binomial intervals reach the rail); clamp to the frame edge
      const yLo = ys.pos(clampBar(ys.kind === "log" ? Math.max(p.lo, ys.domain[0]) : p.lo, ys));
      const yHi = ys.pos(clampBar(p.hi, ys));
      bars.push(
        element("line", { class: "err", x1: px(x), y1: px(yLo), x2: px(x), y2: px(yHi), stroke: color }),
        element("line", { class: "err", x1: px(x - 4), y1: px(yLo), x2: px(x + 4), y2: px(yLo), stroke: color }),
        element("line", { class: "err", x1: px(x - 4), y1: px(yHi), x2: px(x + 4), y2: px(yHi), stroke: color }),
      );
    }
    const path = s.points
      .map((p) => `${px(xs.pos(p.x))},${px(ys.pos(p.y))}`)
      .join(" ");
    parts.push(element("g", {}, bars.join("")));
    if (s.points.length > 1) {
      parts.push(
        element("polyline", {
          points: path,
          fill: "none",
          stroke: color,
          "stroke-width": "1.3",
        }),
      );
    }
    for (const p of s.points) {
      parts.push(
        element("circle", {
          cx: px(xs.pos(p.x)),
          cy: px(ys.pos(p.y)),
          r: "3",
          fill: color,
        }),
      );
    }
  });
  return parts.join("\n");
}

interface FitInfo {
  legendEntry: LegendEntry;
  line: string;
  cells: Record<string, string>;
}

/** The fitted exponent comes from the fit row; the line through the
 *  data is anchored at the centroid in log space. */
function fitOverlay(
  table: Table,
  fitStatistic: string,
  series: Series[],
  xs: Scale,
  ys: Scale,
): FitInfo {
  const fitRows = table.rows.filter((r) => r.statistic === fitStatistic);
  if (fitRows.length === 0) {
    throw new NoRowsError(`fit requested but no '${fitStatistic}' rows in the input`);
  }
  const fit = fitRows[0];
  const slope = fit.estimate;
  let sx = 0;
  let sy = 0;
  let n = 0;
  let lxMin = Infinity;
  let lxMax = -Infinity;
  for (const s of series) {
    for (const p of s.points) {
      const lx = Math.log(p.x);
      sx += lx;
      sy += Math.log(p.y);
      n += 1;
      if (lx < lxMin) lxMin = lx;
      if (lx > lxMax) lxMax = lx;
    }
  }
  const gx = sx / n;
  const gy = sy / n;
  const pad = 0.06 * (lxMax - lxMin || 1);
  let x1 = lxMin - pad;
  let x2 = lxMax + pad;
  const yAt = (lx: number) => gy + slope * (lx - gx);
  if (slope !== 0) {
    // keep the segment inside the y frame
    const [dLo, dHi] = [Math.log(ys.domain[0]), Math.log(ys.domain[1])];
    for (const bound of [dLo, dHi]) {
      const xBound = gx + (bound - gy) / slope;
      if (yAt(x1) < dLo || yAt(x1) > dHi) x1 = xBound;
      if (yAt(x2) < dLo || yAt(x2) > dHi) x2 = xBound;
    }
  }
  const color = "#555";
  const line = element("line", {
    class: "fitline",
    x1: px(xs.pos(Math.exp(x1))),
    y1: px(ys.pos(Math.exp(yAt(x1)))),
    x2: px(xs.pos(Math.exp(x2))),
    y2: px(ys.pos(Math.exp(yAt(x2)))),
    stroke: color,
  });
  return {
    legendEntry: {
      label: `fit: slope = ${formatNumber(fit.estimate)}`,
      color,
      dashed: true,
    },
    line,
    cells: fit.cells,
  };
}

function plotArea(): { x1: number; x2: number; y1: number; y2: number } {
  return {
    x1: MARGIN.left,
    x2: WIDTH - MARGIN.right,
    y1: MARGIN.top,
    y2: HEIGHT - MARGIN.bottom,
  };
}

export function render(spec: PlotSpec): string {
  const table = readTables(inputPaths(spec));
  const sel = resolveSelection(spec, table);
  const area = plotArea();
  let series = collectSeries(table, sel.statistic, sel.x, sel.series);

  let xs: Scale;
  let ys: Scale;
  const extras: string[] = [];
  const entries: LegendEntry[] = [];
  let fitCells: Record<string, string> | undefined;

  if (spec.kind === "loglog") {
    series = keepPositive(series, "xy");
    const [xLo, xHi] = extent(series, (p) => p.x, true);
    const yLo = extent(series, (p) => (p.lo > 0 ? p.lo : p.y), true)[0];
    const yHi = extent(series, (p) => p.hi, true)[1];
    xs = logScale(xLo, xHi, area.x1, area.x2);
    ys = logScale(yLo, yHi, area.y2, area.y1);
    if (spec.fit) {
      const fit = fitOverlay(table, sel.fitStatistic ?? "fit_power", series, xs, ys);
      extras.push(fit.line);
      entries.push(fit.legendEntry);
      fitCells = fit.cells;
    }
  } else if (spec.kind === "tail") {
    series = keepPositive(series, "y");
    const [xLo, xHi] = extent(series, (p) => p.x, false);
    const yLo = extent(series, (p) => (p.lo > 0 ? p.lo : p.y), true)[0];
    const yHi = extent(series, (p) => p.hi, true)[1];
    xs = linearScale(xLo, xHi, area.x1, area.x2);
    ys = logScale(yLo, yHi, area.y2, area.y1);
  } else {
    const [xLo, xHi] = extent(series, (p) => p.x, false);
    const yHi = extent(series, (p) => p.hi, false)[1];
    xs = linearScale(xLo, xHi, area.x1, area.x2);
    ys = linearScale(0, yHi, area.y2, area.y1);
    // stability reference: the level the points should hug
    let sum = 0;
    let n = 0;
    for (const s of series) for (const p of s.points) (sum += Math.log(p.y)), n++;
    const gmean = Math.exp(sum / n);
    extras.push(
      element("line", {
        class: "ref",
        x1: px(area.x1),
        y1: px(ys.pos(gmean)),
        x2: px(area.x2),
        y2: px(ys.pos(gmean)),
      }),
    );
    entries.push({ label: "geometric mean", color: "#888", dashed: true });
  }

  for (let i = 0; i < series.length; i++) {
    if (series[i].label !== null) {
      entries.push({ label: series[i].label!, color: PALETTE[i % PALETTE.length] });
    }
  }

  const labels: AxisLabels = {
    x: spec.xlabel ?? sel.x,
    y: spec.ylabel ?? sel.statistic,
    title: spec.title,
  };

  const seeds = [...new Set(table.rows.map((r) => r.seed))].sort();
  const versions = [...new Set(table.rows.map((r) => r.codeVersion))].sort();

  const body = [
    chrome(xs, ys, labels),
    drawSeries(series, xs, ys),
    extras.join("\n"),
    legend(entries),
    provenance({
      sources: table.sources,
      seeds,
      codeVersions: versions,
      fit: fitCells,
    }),
  ]
    .filter((s) => s.length > 0)
    .join("\n");
  return svgDocument(body);
}
