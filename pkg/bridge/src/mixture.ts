// Exact score of a noised training mixture, evaluated in float64.
//
// The training set is an equal-weight kernel mixture; at clock m the
// kernels sit at exp(-m) * y_i with variance v(m) = 1 - exp(-2m).  The
// score at x is the softmax-weighted pull toward the kernel centers,
// computed with max-subtraction so nothing underflows.

import * as fs from "fs";
import * as path from "path";

export interface RawDataset {
  n: number;
  dims: number;
  samples: Float64Array; // row-major n x dims
  ids: string[];
}

export function sidecarPath(tensorPath: string): string {
  const ext = path.extname(tensorPath);
  const swapped = ext ? tensorPath.slice(0, -ext.length) + ".json" : tensorPath + ".json";
  if (fs.existsSync(swapped)) {
    return swapped;
  }
  return tensorPath + ".json";
}

/** Load a little-endian float32 blob with its JSON sidecar. */
export function loadRawDataset(tensorPath: string, metaPath?: string): RawDataset {
  const meta = JSON.parse(fs.readFileSync(metaPath ?? sidecarPath(tensorPath), "utf-8"));
  const n = Number(meta.n);
  const dims = Number(meta.D);
  if (!Number.isInteger(n) || !Number.isInteger(dims) || n < 1 || dims < 1) {
    throw new Error(`bad sidecar for ${tensorPath}: n=${meta.n} D=${meta.D}`);
  }
  const raw = fs.readFileSync(tensorPath);
  if (raw.length !== 4 * n * dims) {
    throw new Error(
      `${tensorPath}: ${raw.length} bytes but sidecar declares ${4 * n * dims}`,
    );
  }
  const samples = new Float64Array(n * dims);
  for (let i = 0; i < n * dims; i++) {
    samples[i] = raw.readFloatLE(i * 4);
  }
  const ids: string[] = Array.isArray(meta.ids)
    ? meta.ids.map(String)
    : Array.from({ length: n }, (_, i) => String(i).padStart(6, "0"));
  return { n, dims, samples, ids };
}

export function varianceAt(m: number): number {
  return -Math.expm1(-2.0 * m);
}

/**
 * Score of the mixture at `count / dims` points packed row-major in `points`.
 * Requires m > 0; the kernel variance vanishes at m = 0.
 */
export function exactScore(
  ds: RawDataset,
  points: Float64Array,
  m: number,
): Float64Array {
  if (!(m > 0)) {
    throw new Error(`score is undefined at m=${m} (zero kernel variance)`);
  }
  const { n, dims, samples } = ds;
  if (points.length % dims !== 0) {
    throw new Error(`point payload length ${points.length} not divisible by dims ${dims}`);
  }
  const numPoints = points.length / dims;
  const v = varianceAt(m);
  const mu = Math.exp(-m);
  const out = new Float64Array(points.length);
  const logits = new Float64Array(n);
  const pulled = new Float64Array(dims);

  for (let p = 0; p < numPoints; p++) {
    const base = p * dims;
    let peak = -Infinity;
    for (let i = 0; i < n; i++) {
      let d2 = 0;
      const row = i * dims;
      for (let j = 0; j < dims; j++) {
        const diff = points[base + j] - mu * samples[row + j];
        d2 += diff * diff;
      }
      const logit = -d2 / (2 * v);
      logits[i] = logit;
      if (logit > peak) {
        peak = logit;
      }
    }
    pulled.fill(0);
    let total = 0;
    for (let i = 0; i < n; i++) {
      const w = Math.exp(logits[i] - peak);
      total += w;
      const row = i * dims;
      for (let j = 0; j < dims; j++) {
        pulled[j] += w * samples[row + j];
      }
    }
    for (let j = 0; j < dims; j++) {
      out[base + j] = (mu * (pulled[j] / total) - points[base + j]) / v;
    }
  }
  return out;
}
