#!/usr/bin/env node
// Long-running score responder speaking the SCR1 frame protocol.
//
// Usage:
//   node dist/server.js exact:<raw dataset path> stdio
//   node dist/server.js exact:<raw dataset path> tcp:<port>
//
// The "exact:" model source serves the reference mixture score of a raw
// float32 dataset (sidecar JSON).  A checkpoint-backed source would plug
// in here with the same reply contract; the wire clock is m, so adapters
// for t-parameterized networks must invert their own schedule internally.

import * as net from "net";

import {
  FrameFormatError,
  FrameKind,
  FrameReader,
  ScoreFrame,
  encodeFrame,
} from "./frames";
import { RawDataset, exactScore, loadRawDataset } from "./mixture";

export interface ScoreModel {
  dims: number;
  evaluate(points: Float64Array, m: number): Float64Array;
}

export function loadModel(source: string): ScoreModel {
  if (source.startsWith("exact:")) {
    const ds: RawDataset = loadRawDataset(source.slice("exact:".length));
    return {
      dims: ds.dims,
      evaluate: (points, m) => exactScore(ds, points, m),
    };
  }
  throw new Error(
    `unknown model source ${source}; expected exact:<raw dataset path>`,
  );
}

function errorFrame(m: number, message: string): Buffer {
  return encodeFrame({ kind: FrameKind.Error, m, dims: 0, message });
}

/** Map one request frame to one reply frame (the protocol is lock-step). */
export function handleFrame(model: ScoreModel, frame: ScoreFrame): Buffer {
  if (frame.kind !== FrameKind.Request) {
    return errorFrame(frame.m, `expected a request frame, got kind ${frame.kind}`);
  }
  const values = frame.values ?? new Float32Array(0);
  if (frame.dims === 0 || values.length % frame.dims !== 0) {
    return errorFrame(
      frame.m,
      `count ${values.length} not divisible by dims ${frame.dims}`,
    );
  }
  if (frame.dims !== model.dims) {
    return errorFrame(frame.m, `model dimension is ${model.dims}, not ${frame.dims}`);
  }
  let scores: Float64Array;
  try {
    scores = model.evaluate(Float64Array.from(values), frame.m);
  } catch (err) {
    return errorFrame(frame.m, `model failure: ${String(err)}`);
  }
  return encodeFrame({
    kind: FrameKind.Response,
    m: frame.m,
    dims: frame.dims,
    values: Float32Array.from(scores),
  });
}

/** Per-connection pump: feeds bytes through the reader, writes replies. */
export function makeConnectionHandler(
  model: ScoreModel,
  write: (data: Buffer) => void,
): (chunk: Buffer) => void {
  const reader = new FrameReader();
  return (chunk: Buffer) => {
    let frames: ScoreFrame[];
    try {
      frames = reader.push(chunk);
    } catch (err) {
      if (err instanceof FrameFormatError) {
        // the stream cannot be resynced after a corrupt header; report and
        // drop the buffer, keeping the connection alive for fresh frames
        write(errorFrame(0, `malformed frame: ${err.message}`));
        reader.reset();
        return;
      }
      throw err;
    }
    for (const frame of frames) {
      write(handleFrame(model, frame));
    }
  };
}

function serveStdio(model: ScoreModel): void {
  const onChunk = makeConnectionHandler(model, (data) => process.stdout.write(data));
  process.stdin.on("data", onChunk);
  process.stdin.on("end", () => process.exit(0));
  console.error(`score bridge ready on stdio (dims=${model.dims})`);
}

function serveTcp(model: ScoreModel, port: number): void {
  const server = net.createServer((socket) => {
    const onChunk = makeConnectionHandler(model, (data) => socket.write(data));
    socket.on("data", onChunk);
    socket.on("error", (err) => console.error(`connection error: ${err.message}`));
  });
  server.listen(port, "127.0.0.1", () => {
    console.error(`score bridge listening on 127.0.0.1:${port} (dims=${model.dims})`);
  });
}

function main(): void {
  const [source, transport] = process.argv.slice(2);
  if (!source || !transport) {
    console.error("usage: server.js <exact:raw-dataset-path> <stdio|tcp:port>");
    process.exit(2);
  }
  let model: ScoreModel;
  try {
    model = loadModel(source);
  } catch (err) {
    console.error(String(err));
    process.exit(2);
  }
  if (transport === "stdio") {
    serveStdio(model);
  } else if (transport.startsWith("tcp:")) {
    const port = Number(transport.slice(4));
    if (!Number.isInteger(port) || port <= 0 || port > 65535) {
      console.error(`bad tcp port in ${transport}`);
      process.exit(2);
    }
    serveTcp(model, port);
  } else {
    console.error(`unknown transport ${transport}`);
    process.exit(2);
  }
}

if (require.main === module) {
  main();
}
