import { describe, expect, it } from "vitest";

import { P_MAX, P_MIN, formatP, pFromSlider, sliderFromP } from "../src/slider.js";

describe("pFromSlider", () => {
  it("maps the endpoints to the exponent bounds", () => {
    expect(pFromSlider(0)).toBeCloseTo(P_MIN, 12);
    expect(pFromSlider(1)).toBeCloseTo(P_MAX, 12);
  });

  it("maps the midpoint to the geometric mean", () => {
    expect(pFromSlider(0.5)).toBeCloseTo(Math.sqrt(P_MIN * P_MAX), 12);
  });

  it("clamps positions outside [0, 1]", () => {
    expect(pFromSlider(-0.3)).toBeCloseTo(P_MIN, 12);
    expect(pFromSlider(1.7)).toBeCloseTo(P_MAX, 12);
  });

  it("is strictly increasing", () => {
    let prev = pFromSlider(0);
    for (let i = 1; i <= 20; i += 1) {
      const next = pFromSlider(i / 20);
      expect(next).toBeGreaterThan(prev);
      prev = next;
    }
  });
});

describe("sliderFromP", () => {
  it("inverts pFromSlider across the range", () => {
    for (let i = 0; i <= 10; i += 1) {
      const t = i / 10;
      expect(sliderFromP(pFromSlider(t))).toBeCloseTo(t, 10);
    }
  });

  it("clamps exponents outside the slider range", () => {
    expect(sliderFromP(P_MIN / 10)).toBe(0);
    expect(sliderFromP(P_MAX * 3)).toBe(1);
  });
});

describe("formatP", () => {
  it("shows two decimals at or above 1", () => {
    expect(formatP(2)).toBe("2.00");
    expect(formatP(1)).toBe("1.00");
  });

  it("shows three significant digits below 1", () => {
    expect(formatP(0.01)).toBe("0.0100");
    expect(formatP(0.5)).toBe("0.500");
  });
});
