/**
 * Frame decoding for image directories.
 *
 * Native support for binary PPM (P6) and PGM (P5); PNG via pngjs. Every
 * decoded frame becomes planar RGB float data in [0, 1], row-major.
 */

import { readFileSync } from 'node:fs';
import { PNG } from 'pngjs';

export interface RgbImage {
  width: number;
  height: number;
  /** rgb triples, row-major, values in [0, 1] */
  pixels: Float64Array;
}

export class ImageDecodeError extends Error {}

export const IMAGE_EXTENSIONS = ['.ppm', '.pgm', '.png'];
export const VIDEO_EXTENSIONS = ['.mp4', '.avi', '.mkv', '.mov', '.webm'];

export function decodeImage(path: string): RgbImage {
  const lower = path.toLowerCase();
  if (lower.endsWith('.ppm') || lower.endsWith('.pgm')) {
    return decodeNetpbm(readFileSync(path), path);
  }
  if (lower.endsWith('.png')) {
    return decodePng(readFileSync(path), path);
  }
  throw new ImageDecodeError(`unsupported image format: ${path}`);
}

function decodePng(data: Buffer, path: string): RgbImage {
  let png: PNG;
  try {
    png = PNG.sync.read(data);
  } catch (err) {
    throw new ImageDecodeError(`cannot parse PNG ${path}: ${(err as Error).message}`);
  }
  const pixels = new Float64Array(png.width * png.height * 3);
  for (let i = 0; i < png.width * png.height; i++) {
    pixels[i * 3] = png.data[i * 4] / 255;
    pixels[i * 3 + 1] = png.data[i * 4 + 1] / 255;
    pixels[i * 3 + 2] = png.data[i * 4 + 2] / 255;
  }
  return { width: png.width, height: png.height, pixels };
}

function decodeNetpbm(data: Buffer, path: string): RgbImage {
  const magic = data.toString('ascii', 0, 2);
  if (magic !== 'P6' && magic !== 'P5') {
    throw new ImageDecodeError(`${path}: only binary P6/P5 netpbm supported, got ${magic}`);
  }
  // header tokens: magic, width, height, maxval; '#' comments allowed
  let off = 2;
  const tokens: number[] = [];
  while (tokens.length < 3) {
    while (off < data.length && isSpace(data[off])) off++;
    if (data[off] === 0x23) {
      while (off < data.length && data[off] !== 0x0a) off++;
      continue;
    }
    let start = off;
    while (off < data.length && !isSpace(data[off])) off++;
    const token = data.toString('ascii', start, off);
    const value = Number(token);
    if (!Number.isFinite(value)) throw new ImageDecodeError(`${path}: bad header token ${token}`);
    tokens.push(value);
  }
  off++; // single whitespace after maxval
  const [width, height, maxval] = tokens;
  if (maxval <= 0 || maxval > 255) {
    throw new ImageDecodeError(`${path}: unsupported maxval ${maxval}`);
  }
  const channels = magic === 'P6' ? 3 : 1;
  const expected = width * height * channels;
  if (data.length - off < expected) {
    throw new ImageDecodeError(`${path}: pixel payload truncated`);
  }
  const pixels = new Float64Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    if (channels === 3) {
      pixels[i * 3] = data[off + i * 3] / maxval;
      pixels[i * 3 + 1] = data[off + i * 3 + 1] / maxval;
      pixels[i * 3 + 2] = data[off + i * 3 + 2] / maxval;
    } else {
      const v = data[off + i] / maxval;
      pixels[i * 3] = v;
      pixels[i * 3 + 1] = v;
      pixels[i * 3 + 2] = v;
    }
  }
  return { width, height, pixels };
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}

export function encodePpm(img: RgbImage): Buffer {
  const header = Buffer.from(`P6\n${img.width} ${img.height}\n255\n`, 'ascii');
  const body = Buffer.alloc(img.width * img.height * 3);
  for (let i = 0; i < img.width * img.height * 3; i++) {
    body[i] = Math.max(0, Math.min(255, Math.round(img.pixels[i] * 255)));
  }
  return Buffer.concat([header, body]);
}
