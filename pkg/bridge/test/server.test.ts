import { spawn } from "child_process";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";

import { afterAll, describe, expect, it } from "vitest";

import {
  FrameKind,
  FrameReader,
  ScoreFrame,
  decodeFrame,
  encodeFrame,
} from "../src/frames";
import { exactScore, loadRawDataset, varianceAt } from "../src/mixture";
import { handleFrame, loadModel, makeConnectionHandler } from "../src/server";

const tmpDir = fs.mkdtempSync(path.join(os.tmpdir(), "bridge-server-"));
afterAll(() => fs.rmSync(tmpDir, { recursive: true, force: true }));

function writeDataset(rows: number[][]): string {
  const n = rows.length;
  const dims = rows[0].length;
  const buf = Buffer.alloc(4 * n * dims);
  rows.flat().forEach((value, i) => buf.writeFloatLE(value, i * 4));
  const tensorPath = path.join(tmpDir, `ds${n}x${dims}.f32`);
  fs.writeFileSync(tensorPath, buf);
  fs.writeFileSync(tensorPath.replace(/\.f32$/, ".json"),
    JSON.stringify({ n, D: dims, shape: [dims], value_range: [-3, 3] }));
  return tensorPath;
}

const dataset = writeDataset([[1, 0], [-1, 0], [0, 1]]);
const model = loadModel(`exact:${dataset}`);

function request(dims: number, values: number[], m = 0.7): ScoreFrame {
  return { kind: FrameKind.Request, m, dims, values: Float32Array.from(values) };
}

describe("handleFrame", () => {
  it("replies with matching count and float32-quantized exact scores", () => {
    const frame = request(2, [0.3, 0.1, -0.4, 0.9]);
    const reply = decodeFrame(handleFrame(model, frame))!.frame;
    expect(reply.kind).toBe(FrameKind.Response);
    expect(reply.values!.length).toBe(4);
    const ds = loadRawDataset(dataset);
    const expected = exactScore(ds, Float64Array.from(frame.values!), 0.7);
    for (let i = 0; i < 4; i++) {
      expect(reply.values![i]).toBe(Math.fround(expected[i]));
    }
  });

  it("answers a zero-point request with a zero-point response", () => {
    const reply = decodeFrame(handleFrame(model, request(2, [])))!.frame;
    expect(reply.kind).toBe(FrameKind.Response);
    expect(reply.values!.length).toBe(0);
  });

  it("rejects a count not divisible by dims", () => {
    const reply = decodeFrame(handleFrame(model, request(2, [1, 2, 3])))!.frame;
    expect(reply.kind).toBe(FrameKind.Error);
    expect(reply.message).toMatch(/divisible/);
  });

  it("rejects a dimension mismatch", () => {
    const reply = decodeFrame(handleFrame(model, request(3, [1, 2, 3])))!.frame;
    expect(reply.kind).toBe(FrameKind.Error);
    expect(reply.message).toMatch(/dimension/);
  });

  it("reports model failures as error frames", () => {
    const reply = decodeFrame(handleFrame(model, request(2, [0, 0], 0)))!.frame;
    expect(reply.kind).toBe(FrameKind.Error);
    expect(reply.message).toMatch(/model failure/);
  });

  it("rejects non-request kinds", () => {
    const bogus: ScoreFrame = {
      kind: FrameKind.Response, m: 1, dims: 2, values: new Float32Array(2),
    };
    const reply = decodeFrame(handleFrame(model, bogus))!.frame;
    expect(reply.kind).toBe(FrameKind.Error);
  });
});

describe("connection handler", () => {
  it("survives a malformed frame and keeps serving", () => {
    const replies: Buffer[] = [];
    const onChunk = makeConnectionHandler(model, (data) => replies.push(data));
    onChunk(Buffer.from("garbage-that-is-long-enough-to-parse"));
    onChunk(encodeFrame(request(2, [0.1, 0.2])));
    const reader = new FrameReader();
    const frames = replies.flatMap((b) => reader.push(b));
    expect(frames[0].kind).toBe(FrameKind.Error);
    expect(frames[1].kind).toBe(FrameKind.Response);
  });
});

describe("stdio end to end", () => {
  const serverJs = path.resolve(__dirname, "..", "dist", "server.js");

  it.skipIf(!fs.existsSync(serverJs))(
    "spawned server answers requests over stdio",
    async () => {
      const child = spawn("node", [serverJs, `exact:${dataset}`, "stdio"], {
        stdio: ["pipe", "pipe", "inherit"],
      });
      const reader = new FrameReader();
      const replies: ScoreFrame[] = [];
      const done = new Promise<void>((resolve) => {
        child.stdout.on("data", (chunk: Buffer) => {
          replies.push(...reader.push(chunk));
          if (replies.length >= 2) {
            resolve();
          }
        });
      });
      child.stdin.write(encodeFrame(request(2, [0.5, -0.5])));
      child.stdin.write(encodeFrame(request(2, [1, 2, 3])));
      await done;
      child.kill();
      expect(replies[0].kind).toBe(FrameKind.Response);
      expect(replies[1].kind).toBe(FrameKind.Error);
    },
    15000,
  );
});
