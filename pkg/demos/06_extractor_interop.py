"""Reading embeddings produced by the TypeScript extractor.

The committed fixtures under tests/data were written by `extractor/`
(`npm run golden`): one file with pooled per-frame embeddings, one with the
raw per-patch dump. Both parse with the ordinary reader, and pooling the raw
patches here reproduces the pooled file bit-for-bit, so either side of the
language boundary can prepare streams for the other.
"""

import json
from pathlib import Path

import numpy as np

from avcs import PatchGrid, pool_patches, read_stream

data = Path(__file__).resolve().parent.parent / "tests" / "data"

pooled = read_stream(data / "golden_pooled.avcs")
patches = read_stream(data / "golden_patches.avcs")
meta = json.loads((data / "golden_patches.avcs.meta.json").read_text())

print(f"pooled file : {pooled.frame_count} frames, d_emb={pooled.d_emb}")
print(f"patch dump  : {patches.frame_count} records "
      f"({meta['patches_per_frame']} patches per frame, encoder {meta['encoder']})")

per_frame = meta["patches_per_frame"]
exact = 0
for f in range(pooled.frame_count):
    grid = PatchGrid(patches.values[f * per_frame : (f + 1) * per_frame], frame_index=f)
    ours = pool_patches(grid).values.astype(np.float32)
    exact += ours.tobytes() == pooled.values[f].tobytes()
print(f"re-pooled here vs extractor's pooled output: {exact}/{pooled.frame_count} "
      f"frames identical at float32")
