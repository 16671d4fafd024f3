// Framed binary protocol for score requests.
//
// Frame layout (little endian):
//   magic   4 bytes  "SCR1"
//   kind    1 byte   0=request, 1=response, 2=error
//   m       8 bytes  IEEE-754 double (diffusion clock)
//   count   4 bytes  uint32; data frames: number of float32 payload values
//                    (points * dims); error frames: UTF-8 message byte length
//   dims    4 bytes  uint32; point dimension for data frames, 0 for errors
//   payload          count * 4 bytes of float32 values, or the message bytes

export const MAGIC = "SCR1";
export const HEADER_SIZE = 21;

export enum FrameKind {
  Request = 0,
  Response = 1,
  Error = 2,
}

export interface ScoreFrame {
  kind: FrameKind;
  m: number;
  dims: number;
  values?: Float32Array; // data frames
  message?: string;      // error frames
}

export class FrameFormatError extends Error {}

export function encodeFrame(frame: ScoreFrame): Buffer {
  let payload: Buffer;
  let count: number;
  let dims: number;
  if (frame.kind === FrameKind.Error) {
    payload = Buffer.from(frame.message ?? "", "utf-8");
    count = payload.length;
    dims = 0;
  } else {
    const values = frame.values ?? new Float32Array(0);
    payload = Buffer.alloc(values.length * 4);
    for (let i = 0; i < values.length; i++) {
      payload.writeFloatLE(values[i], i * 4);
    }
    count = values.length;
    dims = frame.dims;
  }
  const header = Buffer.alloc(HEADER_SIZE);
  header.write(MAGIC, 0, "ascii");
  header.writeUInt8(frame.kind, 4);
  header.writeDoubleLE(frame.m, 5);
  header.writeUInt32LE(count, 13);
  header.writeUInt32LE(dims, 17);
  return Buffer.concat([header, payload]);
}

/** Decode one frame from the buffer head; null means "wait for more bytes". */
export function decodeFrame(
  buf: Buffer,
): { frame: ScoreFrame; bytesRead: number } | null {
  if (buf.length < HEADER_SIZE) {
    return null;
  }
  if (buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new FrameFormatError(`bad magic ${buf.subarray(0, 4).toString("hex")}`);
  }
  const kind = buf.readUInt8(4);
  if (kind !== FrameKind.Request && kind !== FrameKind.Response && kind !== FrameKind.Error) {
    throw new FrameFormatError(`unknown frame kind ${kind}`);
  }
  const m = buf.readDoubleLE(5);
  const count = buf.readUInt32LE(13);
  const dims = buf.readUInt32LE(17);
  const payloadLen = kind === FrameKind.Error ? count : count * 4;
  if (buf.length < HEADER_SIZE + payloadLen) {
    return null;
  }
  const payload = buf.subarray(HEADER_SIZE, HEADER_SIZE + payloadLen);
  if (kind === FrameKind.Error) {
    return {
      frame: { kind, m, dims: 0, message: payload.toString("utf-8") },
      bytesRead: HEADER_SIZE + payloadLen,
    };
  }
  const values = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    values[i] = payload.readFloatLE(i * 4);
  }
  return { frame: { kind, m, dims, values }, bytesRead: HEADER_SIZE + payloadLen };
}

/** Incremental reader that reassembles frames from arbitrary chunk splits. */
export class FrameReader {
  private buf: Buffer = Buffer.alloc(0);

  /** Feed a chunk; returns every complete frame now available. */
  push(chunk: Buffer): ScoreFrame[] {
    this.buf = this.buf.length === 0 ? chunk : Buffer.concat([this.buf, chunk]);
    const frames: ScoreFrame[] = [];
    for (;;) {
      const decoded = decodeFrame(this.buf); // throws FrameFormatError upward
      if (decoded === null) {
        break;
      }
      frames.push(decoded.frame);
      this.buf = this.buf.subarray(decoded.bytesRead);
    }
    return frames;
  }

  /** Drop buffered bytes (used after an unrecoverable format error). */
  reset(): void {
    this.buf = Buffer.alloc(0);
  }
}
