/**
 * Connection handling: a pure line -> line responder plus stdio and TCP
 * front ends.  Every inbound line produces exactly one response line;
 * protocol errors are answered in-band and never tear the connection down.
 */

import * as net from "net";
import * as readline from "readline";

import { NGramModel } from "./ngram.js";
import { encodeLogp, stringifyDoc } from "./protocol.js";

export interface ServerOptions {
  name: string;
  batchCap: number;
}

export const DEFAULT_BATCH_CAP = 64;

export class ConnectionState {
  lastId = -1;
}

function answerRequest(model: NGramModel, state: ConnectionState, doc: any): object {
  const id = doc?.id;
  if (!Number.isInteger(id)) {
    return { id: null, error: "missing id" };
  }
  if (id <= state.lastId) {
    return { id, error: "ids must be strictly increasing" };
  }
  const history: unknown = doc.history ?? [];
  const prefix: unknown = doc.prefix ?? [];
  if (!Array.isArray(history) || !Array.isArray(prefix)) {
    return { id, error: "history and prefix must be arrays" };
  }
  try {
    const logp = model.logp([...(history as number[]), ...(prefix as number[])]);
    state.lastId = id;
    return { id, logp: encodeLogp(logp) };
  } catch (e) {
    return { id, error: e instanceof Error ? e.message : String(e) };
  }
}

/** Handle one inbound line, returning the response line (no newline). */
export function handleLine(
  model: NGramModel,
  state: ConnectionState,
  options: ServerOptions,
  line: string,
): string {
  let doc: any;
  try {
    doc = JSON.parse(line);
  } catch {
    return stringifyDoc({ id: null, error: "malformed JSON" });
  }
  if (doc && doc.op === "hello") {
    return stringifyDoc({ V: model.V, model: options.name });
  }
  if (doc && doc.op === "batch") {
    const requests = doc.requests;
    if (!Array.isArray(requests)) {
      return stringifyDoc({ id: null, error: "batch needs a requests array" });
    }
    if (requests.length > options.batchCap) {
      return stringifyDoc({ id: null, error: "batch cap exceeded" });
    }
    const responses = requests.map((r: unknown) => answerRequest(model, state, r));
    return stringifyDoc({ responses });
  }
  if (doc && doc.op !== undefined) {
    return stringifyDoc({ id: null, error: `unknown op ${String(doc.op)}` });
  }
  return stringifyDoc(answerRequest(model, state, doc));
}

export function serveStdio(model: NGramModel, options: ServerOptions): void {
  const state = new ConnectionState();
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  rl.on("line", (line) => {
    process.stdout.write(handleLine(model, state, options, line) + "\n");
  });
}

/** TCP front end; the reference serves one connection at a time (later
 * connections queue until the active one closes; the protocol itself
 * permits concurrent connections with independent id spaces). */
export function serveTcp(model: NGramModel, options: ServerOptions, port: number): net.Server {
  const pending: net.Socket[] = [];
  let active: net.Socket | null = null;

  const activate = (): void => {
    if (active !== null) return;
    const socket = pending.shift();
    if (socket === undefined) return;
    active = socket;
    const state = new ConnectionState();
    const rl = readline.createInterface({ input: socket, terminal: false });
    rl.on("line", (line) => {
      socket.write(handleLine(model, state, options, line) + "\n");
    });
    socket.on("end", () => socket.end());
    socket.on("error", () => socket.destroy());
    socket.on("close", () => {
      if (active === socket) {
        active = null;
        activate();
      }
    });
  };

  const server = net.createServer((socket) => {
    pending.push(socket);
    activate();
  });
  server.listen(port, "127.0.0.1", () => {
    const addr = server.address() as net.AddressInfo;
    process.stderr.write(`LISTENING ${addr.port}\n`);
  });
  return server;
}
