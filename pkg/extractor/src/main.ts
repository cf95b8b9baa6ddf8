/**
 * avcs-extract command logic.
 *
 *   extract --input <dir|video> --encoder <id> --out <file.avcs> [--no-pool]
 *   verify <file.avcs>
 *
 * Exit codes: 0 ok, 2 usage or unknown flags, 3 unreadable input/video,
 * 4 encoder load failure, 5 output/disk failure, 6 malformed container.
 */

import { FormatError } from './avcsFormat.js';
import { EncoderLoadError } from './encoder.js';
import { extract, InputError, OutputError, VideoDecodeError } from './extract.js';
import { ImageDecodeError } from './images.js';
import { verify } from './verify.js';

function usage(): never {
  console.error(
    'usage: avcs-extract extract --input <path> --encoder <id> --out <file.avcs> [--no-pool]\n' +
      '       avcs-extract verify <file.avcs>',
  );
  process.exit(2);
}

function parseFlags(argv: string[]): Map<string, string | boolean> {
  const flags = new Map<string, string | boolean>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith('--')) usage();
    const name = arg.slice(2);
    if (name === 'no-pool') {
      flags.set(name, true);
    } else {
      const value = argv[++i];
      if (value === undefined) usage();
      flags.set(name, value);
    }
  }
  return flags;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === 'extract') {
      const flags = parseFlags(rest);
      const input = flags.get('input');
      const encoder = flags.get('encoder');
      const out = flags.get('out');
      if (typeof input !== 'string' || typeof encoder !== 'string' || typeof out !== 'string') {
        usage();
      }
      const report = extract({
        input,
        encoder,
        out,
        pool: !flags.get('no-pool'),
      });
      console.log(
        `wrote ${report.records} records (${report.frames} frames, d_emb=${report.dEmb}) ` +
          `to ${out}\nsha256=${report.sha256}`,
      );
      return 0;
    }
    if (command === 'verify') {
      if (rest.length !== 1) usage();
      const report = verify(rest[0]);
      console.log(JSON.stringify(report, null, 2));
      return 0;
    }
    usage();
  } catch (err) {
    const msg = (err as Error).message;
    if (err instanceof EncoderLoadError) {
      console.error(`ERROR kind=encoder msg=${msg}`);
      return 4;
    }
    if (err instanceof VideoDecodeError || err instanceof InputError || err instanceof ImageDecodeError) {
      console.error(`ERROR kind=input msg=${msg}`);
      return 3;
    }
    if (err instanceof OutputError) {
      console.error(`ERROR kind=output msg=${msg}`);
      return 5;
    }
    if (err instanceof FormatError) {
      console.error(`ERROR kind=format msg=${msg}`);
      return 6;
    }
    throw err;
  }
}
