/**
 * The `.avcs` embedding-stream container.
 *
 * Layout (all little-endian):
 *   magic "AVCS" | version u32=1 | d_emb u32 | frame_count u64 |
 *   label_arity u8 (0 single, 1 multi) | class_count u32 |
 *   then per frame: d_emb float32 values + label record
 *     single: class id u32
 *     multi:  count u32 followed by count sorted u32 class ids
 */

export const MAGIC = 'AVCS';
export const FORMAT_VERSION = 1;
const HEADER_SIZE = 4 + 4 + 4 + 8 + 1 + 4;

export type LabelArity = 'single' | 'multi';

export interface StreamHeader {
  dEmb: number;
  frameCount: number;
  labelArity: LabelArity;
  classCount: number;
}

export class FormatError extends Error {
  constructor(
    message: string,
    readonly kind: 'bad-magic' | 'version' | 'truncated' | 'label-range',
  ) {
    super(message);
  }
}

export function encodeStream(
  header: StreamHeader,
  frames: Float32Array[],
  labels: Array<number | number[]>,
): Buffer {
  if (frames.length !== header.frameCount || labels.length !== header.frameCount) {
    throw new FormatError(`frame_count ${header.frameCount} does not match payload`, 'truncated');
  }
  const single = header.labelArity === 'single';
  let size = HEADER_SIZE;
  for (const label of labels) {
    size += header.dEmb * 4 + (single ? 4 : 4 + (label as number[]).length * 4);
  }
  const buf = Buffer.alloc(size);
  buf.write(MAGIC, 0, 'ascii');
  buf.writeUInt32LE(FORMAT_VERSION, 4);
  buf.writeUInt32LE(header.dEmb, 8);
  buf.writeBigUInt64LE(BigInt(header.frameCount), 12);
  buf.writeUInt8(single ? 0 : 1, 20);
  buf.writeUInt32LE(header.classCount, 21);
  let off = HEADER_SIZE;
  for (let i = 0; i < frames.length; i++) {
    const frame = frames[i];
    if (frame.length !== header.dEmb) {
      throw new FormatError(`frame ${i} has ${frame.length} values, expected ${header.dEmb}`, 'truncated');
    }
    for (let j = 0; j < frame.length; j++) {
      buf.writeFloatLE(frame[j], off);
      off += 4;
    }
    if (single) {
      const id = labels[i] as number;
      checkLabel(id, header.classCount, i);
      buf.writeUInt32LE(id, off);
      off += 4;
    } else {
      const ids = [...(labels[i] as number[])].sort((a, b) => a - b);
      buf.writeUInt32LE(ids.length, off);
      off += 4;
      for (const id of ids) {
        checkLabel(id, header.classCount, i);
        buf.writeUInt32LE(id, off);
        off += 4;
      }
    }
  }
  return buf;
}

function checkLabel(id: number, classCount: number, frame: number): void {
  if (!Number.isInteger(id) || id < 0 || id >= classCount) {
    throw new FormatError(`frame ${frame} label ${id} out of range [0, ${classCount})`, 'label-range');
  }
}

export interface DecodedStream {
  header: StreamHeader;
  frames: Float32Array[];
  labels: Array<number | number[]>;
}

export function decodeStream(buf: Buffer): DecodedStream {
  if (buf.length < HEADER_SIZE) {
    throw new FormatError('stream shorter than its header', 'truncated');
  }
  if (buf.toString('ascii', 0, 4) !== MAGIC) {
    throw new FormatError(`expected magic ${MAGIC}, found ${buf.toString('ascii', 0, 4)}`, 'bad-magic');
  }
  const version = buf.readUInt32LE(4);
  if (version !== FORMAT_VERSION) {
    throw new FormatError(`unsupported version ${version}`, 'version');
  }
  const dEmb = buf.readUInt32LE(8);
  const frameCount = Number(buf.readBigUInt64LE(12));
  const arity = buf.readUInt8(20);
  const classCount = buf.readUInt32LE(21);
  const header: StreamHeader = {
    dEmb,
    frameCount,
    labelArity: arity === 0 ? 'single' : 'multi',
    classCount,
  };
  const frames: Float32Array[] = [];
  const labels: Array<number | number[]> = [];
  let off = HEADER_SIZE;
  const need = (n: number, what: string) => {
    if (off + n > buf.length) throw new FormatError(`stream truncated while reading ${what}`, 'truncated');
  };
  for (let i = 0; i < frameCount; i++) {
    need(dEmb * 4, `frame ${i}`);
    const frame = new Float32Array(dEmb);
    for (let j = 0; j < dEmb; j++) {
      frame[j] = buf.readFloatLE(off);
      off += 4;
    }
    frames.push(frame);
    need(4, `label ${i}`);
    if (header.labelArity === 'single') {
      const id = buf.readUInt32LE(off);
      off += 4;
      checkLabel(id, classCount, i);
      labels.push(id);
    } else {
      const count = buf.readUInt32LE(off);
      off += 4;
      need(count * 4, `label set ${i}`);
      const ids: number[] = [];
      for (let k = 0; k < count; k++) {
        const id = buf.readUInt32LE(off);
        off += 4;
        checkLabel(id, classCount, i);
        ids.push(id);
      }
      labels.push(ids);
    }
  }
  return { header, frames, labels };
}
