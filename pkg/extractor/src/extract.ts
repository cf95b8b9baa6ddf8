/**
 * One-shot extraction: decode frames, run the frozen encoder, write `.avcs`.
 *
 * Frame order follows the sorted file names of the input directory; every
 * frame is used (no sampling). With pooling on, each frame's patch
 * embeddings are averaged exactly the way the engine's own patch pooling
 * does it (float64 accumulation in patch order, one float32 rounding at the
 * end), so the two sides agree bit-for-bit. With pooling off, every patch is
 * written as its own record and the sidecar notes patches_per_frame so the
 * grouping can be reconstructed.
 *
 * A `<out>.meta.json` sidecar records the encoder id, preprocessing, counts,
 * and a sha256 of the emitted bytes; the container format itself stays
 * exactly the engine's.
 */

import { createHash } from 'node:crypto';
import { readdirSync, statSync, writeFileSync } from 'node:fs';
import { spawnSync } from 'node:child_process';
import { mkdtempSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { extname, join } from 'node:path';

import { encodeStream, StreamHeader } from './avcsFormat.js';
import { FrozenPatchEncoder } from './encoder.js';
import { decodeImage, IMAGE_EXTENSIONS, VIDEO_EXTENSIONS } from './images.js';

export class InputError extends Error {}
export class VideoDecodeError extends Error {}
export class OutputError extends Error {}

export interface ExtractJob {
  input: string;
  encoder: string;
  out: string;
  pool: boolean;
}

export interface ExtractReport {
  frames: number;
  records: number;
  dEmb: number;
  patchesPerFrame: number;
  bytes: number;
  sha256: string;
}

function listFrameFiles(dir: string): string[] {
  let entries: string[];
  try {
    entries = readdirSync(dir);
  } catch (err) {
    throw new InputError(`cannot read input directory ${dir}: ${(err as Error).message}`);
  }
  const frames = entries
    .filter((name) => IMAGE_EXTENSIONS.includes(extname(name).toLowerCase()))
    .sort();
  if (frames.length === 0) {
    throw new InputError(`no decodable frames in ${dir}`);
  }
  return frames.map((name) => join(dir, name));
}

/** Decode a video to numbered PPM frames; needs ffmpeg on PATH. */
function decodeVideoToFrames(path: string): { dir: string; files: string[] } {
  const dir = mkdtempSync(join(tmpdir(), 'avcs-frames-'));
  const run = spawnSync('ffmpeg', ['-i', path, '-vsync', '0', join(dir, 'frame_%08d.ppm')], {
    stdio: 'ignore',
  });
  if (run.error || run.status !== 0) {
    rmSync(dir, { recursive: true, force: true });
    throw new VideoDecodeError(
      `cannot decode video ${path}: ${run.error ? run.error.message : 'ffmpeg unavailable or failed'}`,
    );
  }
  return { dir, files: listFrameFiles(dir) };
}

export function pooledEmbedding(patches: Float32Array[]): Float32Array {
  const dEmb = patches[0].length;
  const acc = new Float64Array(dEmb);
  for (const patch of patches) {
    for (let j = 0; j < dEmb; j++) {
      acc[j] += patch[j];
    }
  }
  const out = new Float32Array(dEmb);
  for (let j = 0; j < dEmb; j++) {
    out[j] = Math.fround(acc[j] / patches.length);
  }
  return out;
}

export function extract(job: ExtractJob): ExtractReport {
  const encoder = new FrozenPatchEncoder(job.encoder);
  const stat = statSync(job.input, { throwIfNoEntry: false });
  if (!stat) {
    throw new InputError(`input ${job.input} does not exist`);
  }

  let files: string[];
  let cleanup: string | null = null;
  if (stat.isDirectory()) {
    files = listFrameFiles(job.input);
  } else if (VIDEO_EXTENSIONS.includes(extname(job.input).toLowerCase())) {
    const decoded = decodeVideoToFrames(job.input);
    files = decoded.files;
    cleanup = decoded.dir;
  } else {
    files = [job.input];
  }

  try {
    const records: Float32Array[] = [];
    for (const file of files) {
      const patches = encoder.encodeImage(decodeImage(file));
      if (job.pool) {
        records.push(pooledEmbedding(patches));
      } else {
        records.push(...patches);
      }
    }
    const header: StreamHeader = {
      dEmb: encoder.spec.dEmb,
      frameCount: records.length,
      labelArity: 'single',
      classCount: 1, // unlabeled dump: every record carries the background id
    };
    const blob = encodeStream(header, records, records.map(() => 0));
    try {
      writeFileSync(job.out, blob);
    } catch (err) {
      throw new OutputError(`cannot write ${job.out}: ${(err as Error).message}`);
    }
    const report: ExtractReport = {
      frames: files.length,
      records: records.length,
      dEmb: encoder.spec.dEmb,
      patchesPerFrame: encoder.patchesPerFrame,
      bytes: blob.length,
      sha256: createHash('sha256').update(blob).digest('hex'),
    };
    const meta = {
      encoder: job.encoder,
      pooled: job.pool,
      patches_per_frame: job.pool ? 1 : encoder.patchesPerFrame,
      source_frames: files.length,
      records: records.length,
      d_emb: encoder.spec.dEmb,
      preprocessing: 'patch area-average to 8x8 rgb, tanh projection, float32',
      sha256: report.sha256,
    };
    try {
      writeFileSync(`${job.out}.meta.json`, JSON.stringify(meta, null, 2) + '\n');
    } catch (err) {
      throw new OutputError(`cannot write metadata sidecar: ${(err as Error).message}`);
    }
    return report;
  } finally {
    if (cleanup) rmSync(cleanup, { recursive: true, force: true });
  }
}
