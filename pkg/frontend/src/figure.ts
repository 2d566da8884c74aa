/**
 * Deterministic SVG assembly.
 *
 * Figures are plain strings built in one pass: fixed canvas, fixed
 * style block, attribute order as written, coordinates rounded to a
 * fixed precision. No timestamps, no random ids, no environment
 * lookups, so the same scene always serializes to the same bytes.
 */

import { scaleLinear, scaleLog } from "d3";

export const WIDTH = 640;
export const HEIGHT = 440;
export const MARGIN = { left: 72, right: 24, top: 34, bottom: 54 };

export const PALETTE = ["#1f5fa8", "#c44e38", "#3a7d44", "#7b4ea3", "#b8860b"];

/** coordinate precision: two decimals is below a hundredth of a pixel
 *  of drift from any plausible float noise, and keeps files small */
export function px(v: number): string {
  const r = Math.round(v * 100) / 100;
  return Object.is(r, -0) ? "0" : String(r);
}

/** tick and legend numbers: trim a fixed-precision rendering */
export function formatNumber(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e-4 && a < 1e7 && Number.isInteger(v)) return String(v);
  let s = v.toPrecision(6);
  if (s.includes("e")) {
    const [mant, exp] = s.split("e");
    return trimZeros(mant) + "e" + exp;
  }
  return trimZeros(s);
}

function trimZeros(s: string): string {
  return s.includes(".") ? s.replace(/0+$/, "").replace(/\.$/, "") : s;
}

export function escapeXml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export interface Scale {
  kind: "linear" | "log";
  pos(v: number): number;
  ticks(): number[];
  domain: [number, number];
}

export function linearScale(
  lo: number,
  hi: number,
  rangeLo: number,
  rangeHi: number,
): Scale {
  const s = scaleLinear().domain([lo, hi]).range([rangeLo, rangeHi]).nice();
  const [dLo, dHi] = s.domain() as [number, number];
  return {
    kind: "linear",
    pos: (v) => s(v),
    ticks: () => s.ticks(6),
    domain: [dLo, dHi],
  };
}

export function logScale(
  lo: number,
  hi: number,
  rangeLo: number,
  rangeHi: number,
): Scale {
  const s = scaleLog().domain([lo, hi]).range([rangeLo, rangeHi]).nice();
  const [dLo, dHi] = s.domain() as [number, number];
  return {
    kind: "log",
    pos: (v) => s(v),
    // full decade ticks only; intermediate multiples clutter small axes
    ticks: () => {
      const out: number[] = [];
      for (
        let e = Math.ceil(Math.log10(dLo) - 1e-9);
        e <= Math.floor(Math.log10(dHi) + 1e-9);
        e++
      ) {
        out.push(Math.pow(10, e));
      }
      return out.length >= 2 ? out : (s.ticks(5) as number[]);
    },
    domain: [dLo, dHi],
  };
}

export function element(
  tag: string,
  attrs: Record<string, string>,
  body?: string,
): string {
  let s = "<" + tag;
  for (const [k, v] of Object.entries(attrs)) {
    s += ` ${k}="${v}"`;
  }
  return body === undefined ? s + "/>" : s + ">" + body + "</" + tag + ">";
}

export function text(
  x: number,
  y: number,
  content: string,
  attrs: Record<string, string> = {},
): string {
  return element(
    "text",
    { x: px(x), y: px(y), ...attrs },
    escapeXml(content),
  );
}

const STYLE = [
  "text{font-family:Georgia,serif;font-size:13px;fill:#222}",
  ".title{font-size:15px}",
  ".axis line,.axis path{stroke:#222;fill:none}",
  ".grid line{stroke:#ddd;stroke-width:0.5}",
  ".err{stroke-width:1.2}",
  ".fitline{stroke-dasharray:6 4;stroke-width:1.4;fill:none}",
  ".ref{stroke:#888;stroke-dasharray:2 3;fill:none}",
  ".legend rect.box{fill:#fff;stroke:#999;stroke-width:0.6}",
].join("");

export interface AxisLabels {
  x: string;
  y: string;
  title?: string;
}

/** Everything around the data: frame, ticks, grid, labels. */
export function chrome(xs: Scale, ys: Scale, labels: AxisLabels): string {
  const left = MARGIN.left;
  const right = WIDTH - MARGIN.right;
  const top = MARGIN.top;
  const bottom = HEIGHT - MARGIN.bottom;
  const parts: string[] = [];

  const grid: string[] = [];
  const axis: string[] = [];
  for (const t of xs.ticks()) {
    const x = xs.pos(t);
    grid.push(
      element("line", { x1: px(x), y1: px(top), x2: px(x), y2: px(bottom) }),
    );
    axis.push(
      element("line", {
        x1: px(x),
        y1: px(bottom),
        x2: px(x),
        y2: px(bottom + 5),
      }),
    );
    axis.push(
      text(x, bottom + 19, formatNumber(t), { "text-anchor": "middle" }),
    );
  }
  for (const t of ys.ticks()) {
    const y = ys.pos(t);
    grid.push(
      element("line", { x1: px(left), y1: px(y), x2: px(right), y2: px(y) }),
    );
    axis.push(
      element("line", { x1: px(left - 5), y1: px(y), x2: px(left), y2: px(y) }),
    );
    axis.push(
      text(left - 8, y + 4, formatNumber(t), { "text-anchor": "end" }),
    );
  }
  parts.push(element("g", { class: "grid" }, grid.join("")));
  parts.push(
    element(
      "g",
      { class: "axis", "data-x-scale": xs.kind, "data-y-scale": ys.kind },
      axis.join("") +
        element("path", {
          d: `M${px(left)} ${px(top)}V${px(bottom)}H${px(right)}V${px(top)}Z`,
        }),
    ),
  );
  parts.push(
    text((left + right) / 2, HEIGHT - 12, labels.x, {
      "text-anchor": "middle",
    }),
  );
  parts.push(
    text(16, (top + bottom) / 2, labels.y, {
      "text-anchor": "middle",
      transform: `rotate(-90 16 ${px((top + bottom) / 2)})`,
    }),
  );
  if (labels.title) {
    parts.push(
      text((left + right) / 2, 20, labels.title, {
        "text-anchor": "middle",
        class: "title",
      }),
    );
  }
  return parts.join("\n");
}

export interface LegendEntry {
  label: string;
  color: string;
  dashed?: boolean;
}

export function legend(entries: LegendEntry[]): string {
  if (entries.length === 0) return "";
  const lineH = 18;
  const w = 12 + 26 + 7 * Math.max(...entries.map((e) => e.label.length)) + 10;
  const h = 10 + lineH * entries.length;
  const x0 = WIDTH - MARGIN.right - w - 8;
  const y0 = MARGIN.top + 8;
  const parts = [
    element("rect", {
      class: "box",
      x: px(x0),
      y: px(y0),
      width: px(w),
      height: px(h),
    }),
  ];
  entries.forEach((e, i) => {
    const y = y0 + 14 + lineH * i;
    parts.push(
      element("line", {
        x1: px(x0 + 10),
        y1: px(y - 4),
        x2: px(x0 + 32),
        y2: px(y - 4),
        stroke: e.color,
        "stroke-width": "1.6",
        ...(e.dashed ? { "stroke-dasharray": "6 4" } : {}),
      }),
    );
    parts.push(text(x0 + 38, y, e.label));
  });
  return element("g", { class: "legend" }, parts.join(""));
}

/** Provenance block: which CSVs, their seeds and code versions, and
 *  any fit rows shown, all verbatim from the input. */
export function provenance(meta: {
  sources: string[];
  seeds: string[];
  codeVersions: string[];
  fit?: Record<string, string>;
}): string {
  const payload: Record<string, unknown> = {
    sources: meta.sources,
    seed: meta.seeds,
    code_version: meta.codeVersions,
  };
  if (meta.fit) payload.fit = meta.fit;
  return element("metadata", {}, escapeXml(JSON.stringify(payload)));
}

export function document(body: string): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" ` +
    `viewBox="0 0 ${WIDTH} ${HEIGHT}">\n` +
    element("style", {}, STYLE) +
    "\n" +
    element("rect", {
      width: String(WIDTH),
      height: String(HEIGHT),
      fill: "#fff",
    }) +
    "\n" +
    body +
    "\n</svg>\n"
  );
}
