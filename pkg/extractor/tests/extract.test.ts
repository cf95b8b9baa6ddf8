import { mkdirSync, mkdtempSync, readFileSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { describe, expect, it } from 'vitest';

import { decodeStream } from '../src/avcsFormat.js';
import { FrozenPatchEncoder } from '../src/encoder.js';
import { extract, pooledEmbedding } from '../src/extract.js';
import { encodePpm, decodeImage } from '../src/images.js';
import { syntheticFrame } from '../src/fixtures.js';
import { main } from '../src/main.js';

function frameDir(count: number): string {
  const dir = mkdtempSync(join(tmpdir(), 'avcs-test-'));
  for (let i = 0; i < count; i++) {
    writeFileSync(join(dir, `f_${String(i).padStart(2, '0')}.ppm`), encodePpm(syntheticFrame(i)));
  }
  return dir;
}

describe('frozen encoder', () => {
  it('is deterministic across instances', () => {
    const img = syntheticFrame(3);
    const a = new FrozenPatchEncoder('rp16@2x2').encodeImage(img);
    const b = new FrozenPatchEncoder('rp16@2x2').encodeImage(img);
    expect(a.length).toBe(4);
    for (let p = 0; p < a.length; p++) {
      expect(Array.from(a[p])).toEqual(Array.from(b[p]));
    }
  });

  it('differs across encoder ids', () => {
    const img = syntheticFrame(0);
    const a = new FrozenPatchEncoder('rp16@2x2').encodeImage(img)[0];
    const b = new FrozenPatchEncoder('rp16@3x3').encodeImage(img)[0];
    expect(Array.from(a)).not.toEqual(Array.from(b));
  });

  it('rejects malformed ids', () => {
    expect(() => new FrozenPatchEncoder('resnet50')).toThrowError(/unknown encoder/);
    expect(() => new FrozenPatchEncoder('rp16@2x3')).toThrowError(/square/);
  });
});

describe('extract', () => {
  it('writes one pooled record per frame, in order', () => {
    const dir = frameDir(5);
    const out = join(dir, 'out.avcs');
    const report = extract({ input: dir, encoder: 'rp16@2x2', out, pool: true });
    expect(report.frames).toBe(5);
    expect(report.records).toBe(5);
    const decoded = decodeStream(readFileSync(out));
    expect(decoded.header.frameCount).toBe(5);
    expect(decoded.header.dEmb).toBe(16);
    const meta = JSON.parse(readFileSync(`${out}.meta.json`, 'utf8'));
    expect(meta.encoder).toBe('rp16@2x2');
    expect(meta.sha256).toBe(report.sha256);
  });

  it('identical frames give identical embeddings', () => {
    const dir = mkdtempSync(join(tmpdir(), 'avcs-same-'));
    const bytes = encodePpm(syntheticFrame(7));
    for (let i = 0; i < 5; i++) {
      writeFileSync(join(dir, `f_${i}.ppm`), bytes);
    }
    const out = join(dir, 'out.avcs');
    extract({ input: dir, encoder: 'rp16@2x2', out, pool: true });
    const { frames } = decodeStream(readFileSync(out));
    for (let i = 1; i < 5; i++) {
      expect(Array.from(frames[i])).toEqual(Array.from(frames[0]));
    }
  });

  it('pooled output equals pooling the raw patch dump', () => {
    const dir = frameDir(4);
    const pooled = join(dir, 'pooled.avcs');
    const raw = join(dir, 'raw.avcs');
    extract({ input: dir, encoder: 'rp16@2x2', out: pooled, pool: true });
    const rawReport = extract({ input: dir, encoder: 'rp16@2x2', out: raw, pool: false });
    expect(rawReport.records).toBe(16); // 4 frames x 4 patches
    const pooledStream = decodeStream(readFileSync(pooled));
    const rawStream = decodeStream(readFileSync(raw));
    for (let f = 0; f < 4; f++) {
      const patches = rawStream.frames.slice(f * 4, (f + 1) * 4);
      expect(Array.from(pooledEmbedding(patches))).toEqual(Array.from(pooledStream.frames[f]));
    }
  });

  it('fails on an empty directory with exit code 3', () => {
    const dir = mkdtempSync(join(tmpdir(), 'avcs-empty-'));
    const rc = main(['extract', '--input', dir, '--encoder', 'rp16@2x2', '--out', join(dir, 'x.avcs')]);
    expect(rc).toBe(3);
  });

  it('fails on an unknown encoder with exit code 4', () => {
    const dir = frameDir(1);
    const rc = main(['extract', '--input', dir, '--encoder', 'vgg', '--out', join(dir, 'x.avcs')]);
    expect(rc).toBe(4);
  });

  it('fails on a video without a decoder with exit code 3', () => {
    const dir = mkdtempSync(join(tmpdir(), 'avcs-video-'));
    const video = join(dir, 'clip.mp4');
    writeFileSync(video, Buffer.alloc(64));
    const rc = main(['extract', '--input', video, '--encoder', 'rp16@2x2', '--out', join(dir, 'x.avcs')]);
    expect(rc).toBe(3);
  });

  it('verify reports header and checksums via the CLI', () => {
    const dir = frameDir(2);
    const out = join(dir, 'out.avcs');
    extract({ input: dir, encoder: 'rp16@2x2', out, pool: true });
    expect(main(['verify', out])).toBe(0);
    expect(main(['verify', join(dir, 'f_00.ppm')])).toBe(6);
  });
});

describe('image decoding', () => {
  it('round-trips ppm', () => {
    const img = syntheticFrame(2, 16, 12);
    const dir = mkdtempSync(join(tmpdir(), 'avcs-ppm-'));
    const path = join(dir, 'a.ppm');
    writeFileSync(path, encodePpm(img));
    const back = decodeImage(path);
    expect(back.width).toBe(16);
    expect(back.height).toBe(12);
    let worst = 0;
    for (let i = 0; i < back.pixels.length; i++) {
      worst = Math.max(worst, Math.abs(back.pixels[i] - img.pixels[i]));
    }
    expect(worst).toBeLessThan(1 / 255 + 1e-9); // 8-bit quantization only
  });

  it('decodes grayscale pgm into rgb', () => {
    const dir = mkdtempSync(join(tmpdir(), 'avcs-pgm-'));
    const path = join(dir, 'g.pgm');
    writeFileSync(path, Buffer.concat([Buffer.from('P5\n2 1\n255\n', 'ascii'), Buffer.from([0, 255])]));
    const img = decodeImage(path);
    expect(Array.from(img.pixels)).toEqual([0, 0, 0, 1, 1, 1]);
  });

  it('png frames produce the same embeddings as ppm frames', async () => {
    const { PNG } = await import('pngjs');
    const dir = mkdtempSync(join(tmpdir(), 'avcs-png-'));
    const img = syntheticFrame(4, 24, 18);
    const png = new PNG({ width: img.width, height: img.height });
    for (let i = 0; i < img.width * img.height; i++) {
      png.data[i * 4] = Math.max(0, Math.min(255, Math.round(img.pixels[i * 3] * 255)));
      png.data[i * 4 + 1] = Math.max(0, Math.min(255, Math.round(img.pixels[i * 3 + 1] * 255)));
      png.data[i * 4 + 2] = Math.max(0, Math.min(255, Math.round(img.pixels[i * 3 + 2] * 255)));
      png.data[i * 4 + 3] = 255;
    }
    writeFileSync(join(dir, 'f.png'), PNG.sync.write(png));
    writeFileSync(join(dir, 'f.ppm'), encodePpm(img));
    const fromPng = new FrozenPatchEncoder('rp16@2x2').encodeImage(decodeImage(join(dir, 'f.png')));
    const fromPpm = new FrozenPatchEncoder('rp16@2x2').encodeImage(decodeImage(join(dir, 'f.ppm')));
    for (let p = 0; p < fromPng.length; p++) {
      expect(Array.from(fromPng[p])).toEqual(Array.from(fromPpm[p]));
    }
  });
});
