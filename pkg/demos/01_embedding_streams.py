"""Embedding streams: the engine's input medium.

Walks through patch pooling, the `.avcs` binary container, the synthetic
multi-scale activity generator, and stream concatenation.
"""

import io

import numpy as np

from avcs import (
    PatchGrid,
    SynthConfig,
    concat_streams,
    pool_patches,
    read_stream,
    synth_dataset,
    write_stream,
)

# --- a frame arrives as a grid of patch embeddings; pooling collapses it ---
rng = np.random.default_rng(0)
grid = PatchGrid(rng.normal(size=(16, 8)), frame_index=0)
frame = pool_patches(grid)
print(f"pooled {grid.patch_count} patches of dim {grid.d_emb} -> one embedding, "
      f"first values {np.round(frame.values[:3], 3)}")

# --- synthesize labeled streams with short/medium/long activities ---------
config = SynthConfig(class_count=4, d_emb=16, n_streams=3, noise_sigma=0.5)
dataset = synth_dataset(config, seed=12)
for i, (stream, spans) in enumerate(dataset):
    desc = ", ".join(f"class {sp.class_id} [{sp.start_frame}..{sp.end_frame}] ({sp.scale_class})"
                     for sp in spans)
    print(f"stream {i}: {stream.frame_count} frames, {desc}")

# --- round-trip through the binary container ------------------------------
stream, spans = dataset[0]
buf = io.BytesIO()
n_bytes = write_stream(stream, buf)
back = read_stream(buf.getvalue())
print(f"container round trip: {n_bytes} bytes, equal={back == stream}")

# --- concatenate clips into one long stream (span indices shift) ----------
streams = [s for s, _ in dataset]
span_lists = [sp for _, sp in dataset]
merged, merged_spans = concat_streams(streams, span_lists)
print(f"concatenated {len(streams)} streams -> {merged.frame_count} frames, "
      f"{len(merged_spans)} spans; last span now starts at {merged_spans[-1].start_frame}")
