/**
 * Order-m n-gram with add-delta smoothing; the reference model served over
 * the wire protocol.
 *
 * Counts, smoothing arithmetic, tokenization, and the persistence format
 * mirror the engine's in-process n-gram exactly: conditionals use the
 * longest available context up to m tokens, unseen contexts fall back to
 * the smoothed (uniform) distribution when delta > 0, and the JSON schema
 * is {"order","delta","tokenization","symbols","counts":[[ctx,v,c],...]}.
 */

import { readFileSync } from "fs";

export type Tokenization = "char" | "byte" | "whitespace";

export interface NGramJson {
  order: number;
  delta: number;
  tokenization: Tokenization;
  symbols: string[];
  counts: Array<[number[], number, number]>;
}

function ctxKey(ctx: number[]): string {
  return ctx.join(",");
}

export class NGramModel {
  readonly order: number;
  readonly delta: number;
  readonly tokenization: Tokenization;
  readonly symbols: string[];
  readonly V: number;
  private counts: Map<string, Map<number, number>>;
  private totals: Map<string, number>;

  constructor(
    order: number,
    delta: number,
    counts: Map<string, Map<number, number>>,
    symbols: string[],
    tokenization: Tokenization = "char",
  ) {
    if (order < 1) throw new Error(`order must be >= 1, got ${order}`);
    if (delta < 0) throw new Error(`delta must be >= 0, got ${delta}`);
    this.order = order;
    this.delta = delta;
    this.counts = counts;
    this.symbols = symbols;
    this.V = symbols.length;
    this.tokenization = tokenization;
    this.totals = new Map();
    for (const [key, row] of counts) {
      let total = 0;
      for (const c of row.values()) total += c;
      this.totals.set(key, total);
    }
  }

  /** Log-probability vector conditioned on history + prefix token ids. */
  logp(context: number[]): number[] {
    for (const t of context) {
      if (!Number.isInteger(t) || t < 0 || t >= this.V) {
        throw new Error("token out of range");
      }
    }
    const m = Math.min(this.order, context.length);
    const ctx = context.slice(context.length - m);
    const key = ctxKey(ctx);
    const row = this.counts.get(key);
    if (row === undefined && this.delta === 0) {
      throw new Error(`context [${key}] unseen and delta=0`);
    }
    const total = row === undefined ? 0 : this.totals.get(key)!;
    const denom = total + this.delta * this.V;
    if (denom === 0) throw new Error(`context [${key}] has zero mass and delta=0`);
    const out = new Array<number>(this.V);
    for (let v = 0; v < this.V; v++) {
      const c = (row?.get(v) ?? 0) + this.delta;
      out[v] = Math.log(c / denom);
    }
    return out;
  }

  toJson(): NGramJson {
    const entries: Array<[number[], number, number]> = [];
    for (const [key, row] of this.counts) {
      const ctx = key === "" ? [] : key.split(",").map(Number);
      for (const [v, c] of row) entries.push([ctx, v, c]);
    }
    entries.sort((a, b) => {
      const ka = JSON.stringify(a);
      const kb = JSON.stringify(b);
      return ka < kb ? -1 : ka > kb ? 1 : 0;
    });
    return {
      order: this.order,
      delta: this.delta,
      tokenization: this.tokenization,
      symbols: this.symbols,
      counts: entries,
    };
  }

  static fromJson(doc: NGramJson): NGramModel {
    const counts = new Map<string, Map<number, number>>();
    for (const [ctx, v, c] of doc.counts) {
      const key = ctxKey(ctx);
      if (!counts.has(key)) counts.set(key, new Map());
      counts.get(key)!.set(v, c);
    }
    return new NGramModel(doc.order, doc.delta, counts, doc.symbols, doc.tokenization);
  }

  static fromFile(path: string): NGramModel {
    return NGramModel.fromJson(JSON.parse(readFileSync(path, "utf-8")) as NGramJson);
  }
}

export function tokenize(text: string, tokenization: Tokenization): string[] {
  if (tokenization === "char") return Array.from(text);
  if (tokenization === "byte") {
    return Array.from(Buffer.from(text, "utf-8")).map(
      (b) => `0x${b.toString(16).padStart(2, "0")}`,
    );
  }
  if (tokenization === "whitespace") return text.split(/\s+/).filter((s) => s.length > 0);
  throw new Error(`unknown tokenization ${tokenization}`);
}

/** Fit from literal text; counts are collected for every context length
 * 0..order so short prefixes at the start of a sequence condition cleanly. */
export function fitNgram(
  text: string,
  order: number,
  delta = 1.0,
  tokenization: Tokenization = "char",
): NGramModel {
  const raw = tokenize(text, tokenization);
  if (raw.length === 0) throw new Error("corpus is empty after tokenization");
  const symbols = Array.from(new Set(raw)).sort((a, b) => (a < b ? -1 : a > b ? 1 : 0));
  if (symbols.length < 2) throw new Error("corpus must contain at least two distinct symbols");
  const ids = new Map(symbols.map((s, i) => [s, i]));
  const toks = raw.map((s) => ids.get(s)!);
  const counts = new Map<string, Map<number, number>>();
  for (let i = 0; i < toks.length; i++) {
    const t = toks[i];
    for (let ell = 0; ell <= Math.min(order, i); ell++) {
      const key = ctxKey(toks.slice(i - ell, i));
      if (!counts.has(key)) counts.set(key, new Map());
      const row = counts.get(key)!;
      row.set(t, (row.get(t) ?? 0) + 1);
    }
  }
  return new NGramModel(order, delta, counts, symbols, tokenization);
}
