import { describe, expect, it } from "vitest";

import { canonicalNumber, canonicalStringify } from "../src/canonical";

describe("canonicalNumber", () => {
  it("renders numbers the way the harness does", () => {
    const cases: [number, string][] = [
      [0, "0"],
      [-0, "0"],
      [5.0, "5"],
      [0.5, "0.5"],
      [1e16, "10000000000000000"],
      [1e21, "1e+21"],
      [1.5e22, "1.5e+22"],
      [1e-7, "1e-7"],
      [1e-6, "0.000001"],
      [123.456, "123.456"],
      [0.1 + 0.2, "0.30000000000000004"],
      [-2.5, "-2.5"],
    ];
    for (const [value, expected] of cases) {
      expect(canonicalNumber(value)).toBe(expected);
    }
  });

  it("rejects non-finite values", () => {
    expect(() => canonicalNumber(Infinity)).toThrow();
    expect(() => canonicalNumber(NaN)).toThrow();
  });
});

describe("canonicalStringify", () => {
  it("sorts keys and omits whitespace", () => {
    expect(canonicalStringify({ b: 1, a: [true, null] })).toBe(
      '{"a":[true,null],"b":1}',
    );
  });

  it("escapes non-ascii with lowercase hex", () => {
    expect(canonicalStringify("café")).toBe('"caf\\u00e9"');
    expect(canonicalStringify("")).toBe('"\\u0001"');
  });

  it("round-trips through JSON.parse", () => {
    const value = { x: [1.5, "a\nb", { y: 0.05 }], z: false };
    expect(JSON.parse(canonicalStringify(value))).toEqual(value);
  });
});
