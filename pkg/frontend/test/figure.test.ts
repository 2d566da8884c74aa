import { describe, expect, it } from "vitest";

import {
  element,
  escapeXml,
  formatNumber,
  linearScale,
  logScale,
  px,
} from "../src/figure.js";

describe("formatNumber", () => {
  it("keeps small integers whole", () => {
    expect(formatNumber(10)).toBe("10");
    expect(formatNumber(-3)).toBe("-3");
    expect(formatNumber(0)).toBe("0");
  });

  it("trims six-significant-digit renderings", () => {
    expect(formatNumber(0.1)).toBe("0.1");
    expect(formatNumber(-1.2899682434)).toBe("-1.28997");
    expect(formatNumber(0.0001)).toBe("0.0001");
  });

  it("keeps exponent form for extremes", () => {
    expect(formatNumber(3e-7)).toBe("3e-7");
    expect(formatNumber(12345678)).toBe("1.23457e+7");
  });
});

describe("px", () => {
  it("rounds to hundredths", () => {
    expect(px(12.345678)).toBe("12.35");
  });

  it("never emits negative zero", () => {
    expect(px(-0.001)).toBe("0");
  });
});

describe("scales", () => {
  it("linear positions interpolate the domain", () => {
    const s = linearScale(0, 10, 100, 200);
    expect(s.pos(0)).toBe(100);
    expect(s.pos(10)).toBe(200);
    expect(s.pos(5)).toBe(150);
    expect(s.ticks()).toEqual([0, 2, 4, 6, 8, 10]);
  });

  it("log ticks are full decades", () => {
    const s = logScale(0.0015, 0.9, 0, 100);
    expect(s.ticks()).toEqual([0.001, 0.01, 0.1, 1]);
  });

  it("log position is monotone", () => {
    const s = logScale(1, 100, 0, 100);
    expect(s.pos(10)).toBeCloseTo(50);
    expect(s.pos(1)).toBeLessThan(s.pos(2));
  });
});

describe("element", () => {
  it("writes attributes in the order given", () => {
    expect(element("line", { x1: "1", y1: "2" })).toBe('<line x1="1" y1="2"/>');
    expect(element("g", { class: "axis" }, "inner")).toBe(
      '<g class="axis">inner</g>',
    );
  });
});

describe("escapeXml", () => {
  it("escapes markup characters", () => {
    expect(escapeXml('a<b&"c"')).toBe("a&lt;b&amp;&quot;c&quot;");
  });
});
