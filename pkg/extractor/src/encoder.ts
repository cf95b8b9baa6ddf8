/**
 * Frozen patch-embedding encoders.
 *
 * The engine side only cares about d_emb, so the encoder is a pluggable,
 * id-addressed component. The built-in family `rp<d_emb>@<g>x<g>` is a
 * deterministic random-projection encoder: the id seeds the projection
 * weights, so the encoder is frozen by construction and two runs (or two
 * machines) produce bit-identical embeddings. Each of the g*g patches is
 * area-averaged down to an 8x8 RGB summary, projected to d_emb values, and
 * passed through tanh; outputs are rounded to float32.
 */

import { RgbImage } from './images.js';

const SUMMARY_SIDE = 8;
const PATCH_FEATURES = SUMMARY_SIDE * SUMMARY_SIDE * 3;

export class EncoderLoadError extends Error {}

export interface EncoderSpec {
  id: string;
  dEmb: number;
  grid: number;
}

export function parseEncoderId(id: string): EncoderSpec {
  const match = /^rp(\d+)@(\d+)x(\d+)$/.exec(id);
  if (!match) {
    throw new EncoderLoadError(
      `unknown encoder ${id}; expected rp<d_emb>@<g>x<g>, e.g. rp64@4x4`,
    );
  }
  const dEmb = Number(match[1]);
  const g1 = Number(match[2]);
  const g2 = Number(match[3]);
  if (g1 !== g2 || g1 < 1 || dEmb < 4) {
    throw new EncoderLoadError(`encoder ${id}: grid must be square and d_emb >= 4`);
  }
  return { id, dEmb, grid: g1 };
}

const MASK64 = (1n << 64n) - 1n;

function fnv1a64(text: string): bigint {
  let hash = 0xcbf29ce484222325n;
  for (const ch of Buffer.from(text, 'utf8')) {
    hash ^= BigInt(ch);
    hash = (hash * 0x100000001b3n) & MASK64;
  }
  return hash;
}

/** splitmix64 stream of doubles in [0, 1); exact across platforms */
class SplitMix64 {
  constructor(private state: bigint) {}

  nextUint(): bigint {
    this.state = (this.state + 0x9e3779b97f4a7c15n) & MASK64;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
    return (z ^ (z >> 31n)) & MASK64;
  }

  nextDouble(): number {
    return Number(this.nextUint() >> 11n) / 2 ** 53;
  }
}

export class FrozenPatchEncoder {
  readonly spec: EncoderSpec;
  private readonly weights: Float64Array; // (dEmb, PATCH_FEATURES) row-major

  constructor(id: string) {
    this.spec = parseEncoderId(id);
    const rng = new SplitMix64(fnv1a64(id));
    const bound = 1 / Math.sqrt(PATCH_FEATURES);
    this.weights = new Float64Array(this.spec.dEmb * PATCH_FEATURES);
    for (let i = 0; i < this.weights.length; i++) {
      this.weights[i] = (rng.nextDouble() * 2 - 1) * bound;
    }
  }

  get patchesPerFrame(): number {
    return this.spec.grid * this.spec.grid;
  }

  /** One float32 embedding per patch, in row-major patch order. */
  encodeImage(img: RgbImage): Float32Array[] {
    const g = this.spec.grid;
    const out: Float32Array[] = [];
    for (let py = 0; py < g; py++) {
      for (let px = 0; px < g; px++) {
        const summary = this.patchSummary(img, px, py);
        out.push(this.project(summary));
      }
    }
    return out;
  }

  private patchSummary(img: RgbImage, px: number, py: number): Float64Array {
    const g = this.spec.grid;
    const x0 = Math.floor((px * img.width) / g);
    const x1 = Math.max(x0 + 1, Math.floor(((px + 1) * img.width) / g));
    const y0 = Math.floor((py * img.height) / g);
    const y1 = Math.max(y0 + 1, Math.floor(((py + 1) * img.height) / g));
    const summary = new Float64Array(PATCH_FEATURES);
    const counts = new Float64Array(SUMMARY_SIDE * SUMMARY_SIDE);
    for (let y = y0; y < y1; y++) {
      const sy = Math.min(
        SUMMARY_SIDE - 1,
        Math.floor(((y - y0) * SUMMARY_SIDE) / (y1 - y0)),
      );
      for (let x = x0; x < x1; x++) {
        const sx = Math.min(
          SUMMARY_SIDE - 1,
          Math.floor(((x - x0) * SUMMARY_SIDE) / (x1 - x0)),
        );
        const cell = sy * SUMMARY_SIDE + sx;
        const pix = (y * img.width + x) * 3;
        counts[cell]++;
        summary[cell * 3] += img.pixels[pix];
        summary[cell * 3 + 1] += img.pixels[pix + 1];
        summary[cell * 3 + 2] += img.pixels[pix + 2];
      }
    }
    for (let cell = 0; cell < counts.length; cell++) {
      if (counts[cell] > 0) {
        summary[cell * 3] /= counts[cell];
        summary[cell * 3 + 1] /= counts[cell];
        summary[cell * 3 + 2] /= counts[cell];
      }
    }
    return summary;
  }

  private project(summary: Float64Array): Float32Array {
    const out = new Float32Array(this.spec.dEmb);
    for (let row = 0; row < this.spec.dEmb; row++) {
      let acc = 0;
      const base = row * PATCH_FEATURES;
      for (let j = 0; j < PATCH_FEATURES; j++) {
        acc += this.weights[base + j] * summary[j];
      }
      out[row] = Math.fround(Math.tanh(acc * 8));
    }
    return out;
  }
}
