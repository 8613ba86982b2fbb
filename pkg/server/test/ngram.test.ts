import { describe, expect, test } from "vitest";

import { fitNgram, NGramModel, tokenize } from "../src/ngram.js";

describe("tokenize", () => {
  test("char splits code points", () => {
    expect(tokenize("abc", "char")).toEqual(["a", "b", "c"]);
  });

  test("whitespace collapses runs", () => {
    expect(tokenize("  a  b \n c ", "whitespace")).toEqual(["a", "b", "c"]);
  });

  test("byte uses hex symbols", () => {
    expect(tokenize("ab", "byte")).toEqual(["0x61", "0x62"]);
  });
});

describe("fitNgram", () => {
  test("deterministic corpus pins the conditional", () => {
    const m = fitNgram("ababab", 1, 0.0);
    expect(m.V).toBe(2);
    const logp = m.logp([0]); // after "a"
    expect(logp[1]).toBe(0);
    expect(logp[0]).toBe(-Infinity);
  });

  test("add-one smoothing arithmetic", () => {
    const m = fitNgram("aab", 1, 1.0);
    // p(a|a) = (1+1)/(2+2)
    expect(Math.exp(m.logp([0])[0])).toBeCloseTo(0.5, 12);
  });

  test("unseen context with delta=0 throws", () => {
    const m = fitNgram("ababab", 2, 0.0);
    expect(() => m.logp([1, 1])).toThrow(/unseen/);
  });

  test("empty corpus rejected", () => {
    expect(() => fitNgram("", 1)).toThrow(/empty/);
  });

  test("conditionals normalize", () => {
    const m = fitNgram("the quick brown fox jumps", 2, 0.5);
    for (const ctx of [[], [0], [1, 2]]) {
      const total = m.logp(ctx).reduce((s, lp) => s + Math.exp(lp), 0);
      expect(total).toBeCloseTo(1.0, 9);
    }
  });
});

describe("persistence", () => {
  test("fit('ababab') equals the committed fixture", () => {
    const m = fitNgram("ababab", 1, 0.0);
    const loaded = NGramModel.fromFile(new URL("../testdata/abab.json", import.meta.url).pathname);
    expect(loaded.V).toBe(m.V);
    expect(loaded.symbols).toEqual(m.symbols);
    for (const ctx of [[0], [1], [0, 1]]) {
      expect(loaded.logp(ctx)).toEqual(m.logp(ctx));
    }
  });

  test("round trip through json", () => {
    const m = fitNgram("abracadabra", 2, 0.5);
    const back = NGramModel.fromJson(m.toJson());
    for (const ctx of [[], [0], [1, 0]]) {
      expect(back.logp(ctx)).toEqual(m.logp(ctx));
    }
  });
});
