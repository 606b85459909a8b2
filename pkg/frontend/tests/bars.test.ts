import { describe, expect, it } from "vitest";

import { computeBars } from "../src/bars.js";

describe("probability bars", () => {
  it("maps each class to a width proportional to its probability", () => {
    const bars = computeBars({ real: 0.9, fake: 0.08, plastic: 0.02 });
    expect(bars.map((b) => b.label)).toEqual(["real", "fake", "plastic"]);
    expect(bars.map((b) => b.widthPercent)).toEqual([90, 8, 2]);
    // widths track the distribution exactly at 0.01% resolution, which is
    // well under one pixel on any track narrower than 10,000 px
    for (const bar of bars) {
      expect(Math.abs(bar.widthPercent - bar.fraction * 100)).toBeLessThan(0.005 + 1e-12);
    }
  });

  it("widths sum to the distribution total", () => {
    const probs = { real: 0.6652, fake: 0.2447, plastic: 0.09 };
    const bars = computeBars(probs);
    const sum = bars.reduce((acc, b) => acc + b.widthPercent, 0);
    expect(sum).toBeCloseTo(99.99, 2);
    expect(bars[0].valueText).toBe("66.5%");
  });

  it("handles a one-class edge case", () => {
    const bars = computeBars({ real: 1 });
    expect(bars).toHaveLength(1);
    expect(bars[0].widthPercent).toBe(100);
  });
});
