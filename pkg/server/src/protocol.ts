/**
 * Wire protocol: one JSON document per line, UTF-8, no embedded newlines.
 *
 * Handshake:   {"op":"hello"}                      -> {"V":int,"model":string}
 * Request:     {"id":int,"history":[..],"prefix":[..]} -> {"id":int,"logp":[..]}
 * Batch:       {"op":"batch","requests":[..]}      -> {"responses":[..]}
 * Any failure: {"id":int|null,"error":string}; the connection stays up.
 *
 * Request ids are strictly increasing per connection.  Log-probability
 * -Infinity is encoded as the sentinel -1000000000 (JSON has no
 * infinities); integral values are serialized without a decimal point so
 * the bytes agree across host languages.
 */

export const NEG_INF_SENTINEL = -1000000000;

export interface WireRequest {
  id: number;
  history: number[];
  prefix: number[];
}

export interface WireResponse {
  id: number;
  logp: number[];
}

export interface WireError {
  id: number | null;
  error: string;
}

export function encodeLogp(logp: number[]): number[] {
  return logp.map((x) => (x === -Infinity || x <= NEG_INF_SENTINEL ? NEG_INF_SENTINEL : x));
}

export function decodeLogp(values: number[]): number[] {
  return values.map((x) => (x <= NEG_INF_SENTINEL / 2 ? -Infinity : x));
}

/** Serialize a response document (key order and number formatting are part
 * of the golden-transcript contract). */
export function stringifyDoc(doc: unknown): string {
  return JSON.stringify(doc);
}

export function logSumExp(values: number[]): number {
  const m = Math.max(...values);
  if (m === -Infinity) return -Infinity;
  let s = 0;
  for (const v of values) s += Math.exp(v - m);
  return m + Math.log(s);
}
