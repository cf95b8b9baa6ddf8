/**
 * Regenerates the committed interop fixtures: a deterministic set of frames,
 * extracted once pooled and once as a raw patch dump, written into the
 * engine's tests/data directory (override with argv[1]). The engine's test
 * suite parses these files and checks pooled values against its own patch
 * pooling, so this script is the source of truth for the fixtures.
 */

import { mkdirSync, writeFileSync } from 'node:fs';
import { join } from 'node:path';

import { extract } from './extract.js';
import { encodePpm, RgbImage } from './images.js';

export function syntheticFrame(index: number, width = 48, height = 36): RgbImage {
  const pixels = new Float64Array(width * height * 3);
  const cx = (0.5 + 0.35 * Math.sin(index / 3)) * width;
  const cy = (0.5 + 0.35 * Math.cos(index / 5)) * height;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = (y * width + x) * 3;
      const d2 = ((x - cx) / width) ** 2 + ((y - cy) / height) ** 2;
      const blob = Math.exp(-d2 * 40);
      pixels[i] = x / width;
      pixels[i + 1] = blob;
      pixels[i + 2] = (y / height + index / 10) % 1;
    }
  }
  return { width, height, pixels };
}

export function writeGolden(outDir: string, frameCount = 6, encoder = 'rp32@4x4'): void {
  const framesDir = join(outDir, 'golden_frames');
  mkdirSync(framesDir, { recursive: true });
  for (let i = 0; i < frameCount; i++) {
    writeFileSync(join(framesDir, `frame_${String(i).padStart(3, '0')}.ppm`), encodePpm(syntheticFrame(i)));
  }
  for (const [name, pool] of [
    ['golden_pooled.avcs', true],
    ['golden_patches.avcs', false],
  ] as const) {
    const report = extract({
      input: framesDir,
      encoder,
      out: join(outDir, name),
      pool,
    });
    console.log(`${name}: ${report.records} records, sha256=${report.sha256}`);
  }
}
