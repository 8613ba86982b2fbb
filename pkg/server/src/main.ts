#!/usr/bin/env node
/**
 * Entry point.
 *
 *   node dist/main.js --model model.json [--name abab] --transport stdio
 *   node dist/main.js --corpus text.txt --order 2 --delta 1 --transport tcp --port 0
 *
 * TCP mode reports the bound port as "LISTENING <port>" on stderr.
 */

import { basename } from "path";
import { readFileSync } from "fs";

import { fitNgram, NGramModel, Tokenization } from "./ngram.js";
import { DEFAULT_BATCH_CAP, serveStdio, serveTcp } from "./server.js";

interface Args {
  model?: string;
  corpus?: string;
  order: number;
  delta: number;
  tokenization: Tokenization;
  name?: string;
  transport: "stdio" | "tcp";
  port: number;
  batchCap: number;
}

function parseArgs(argv: string[]): Args {
  const args: Args = {
    order: 1,
    delta: 1.0,
    tokenization: "char",
    transport: "stdio",
    port: 0,
    batchCap: DEFAULT_BATCH_CAP,
  };
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    const next = () => {
      if (i + 1 >= argv.length) throw new Error(`missing value for ${a}`);
      return argv[++i];
    };
    if (a === "--model") args.model = next();
    else if (a === "--corpus") args.corpus = next();
    else if (a === "--order") args.order = parseInt(next(), 10);
    else if (a === "--delta") args.delta = parseFloat(next());
    else if (a === "--tokenization") args.tokenization = next() as Tokenization;
    else if (a === "--name") args.name = next();
    else if (a === "--transport") args.transport = next() as Args["transport"];
    else if (a === "--port") args.port = parseInt(next(), 10);
    else if (a === "--batch-cap") args.batchCap = parseInt(next(), 10);
    else if (a === "--help" || a === "-h") {
      console.error(
        "usage: main.js (--model file.json | --corpus file [--order n] [--delta x] " +
          "[--tokenization char|byte|whitespace]) [--name s] [--transport stdio|tcp] " +
          "[--port n] [--batch-cap n]",
      );
      process.exit(0);
    } else throw new Error(`unknown argument ${a}`);
  }
  return args;
}

function buildModel(args: Args): { model: NGramModel; name: string } {
  if (args.model) {
    return {
      model: NGramModel.fromFile(args.model),
      name: args.name ?? basename(args.model).replace(/\.[^.]*$/, ""),
    };
  }
  if (args.corpus) {
    const text = readFileSync(args.corpus, "utf-8");
    return {
      model: fitNgram(text, args.order, args.delta, args.tokenization),
      name: args.name ?? basename(args.corpus).replace(/\.[^.]*$/, ""),
    };
  }
  throw new Error("need --model or --corpus");
}

function main(): void {
  const args = parseArgs(process.argv.slice(2));
  const { model, name } = buildModel(args);
  const options = { name, batchCap: args.batchCap };
  if (args.transport === "stdio") {
    serveStdio(model, options);
  } else if (args.transport === "tcp") {
    serveTcp(model, options, args.port);
  } else {
    throw new Error(`unknown transport ${args.transport}`);
  }
}

main();
