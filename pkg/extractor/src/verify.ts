/** Parse a `.avcs` file and report header fields plus checksums. */

import { createHash } from 'node:crypto';
import { readFileSync } from 'node:fs';

import { decodeStream } from './avcsFormat.js';

export interface VerifyReport {
  dEmb: number;
  frameCount: number;
  labelArity: string;
  classCount: number;
  bytes: number;
  sha256: string;
  valueChecksum: string;
}

export function verify(path: string): VerifyReport {
  const blob = readFileSync(path);
  const { header, frames } = decodeStream(blob);
  const valueHash = createHash('sha256');
  for (const frame of frames) {
    valueHash.update(Buffer.from(frame.buffer, frame.byteOffset, frame.byteLength));
  }
  return {
    dEmb: header.dEmb,
    frameCount: header.frameCount,
    labelArity: header.labelArity,
    classCount: header.classCount,
    bytes: blob.length,
    sha256: createHash('sha256').update(blob).digest('hex'),
    valueChecksum: valueHash.digest('hex'),
  };
}
