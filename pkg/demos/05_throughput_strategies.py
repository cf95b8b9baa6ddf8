"""Throughput of the three input strategies.

S1 re-runs the model on the whole prefix every step, so its per-step cost
grows with the stream; S2 re-runs a trailing window (constant but heavier
than one frame); S3 streams statefully at O(1) per frame. The bench samples
per-frame throughput at logarithmic milestones; the stateful strategy stays
flat while the all-frames strategy collapses.
"""

from pathlib import Path

from avcs import ModelConfig, init_model
from avcs.harness import bench_csv, bench_svg, parse_strategy, run_bench

model_cfg = ModelConfig(d_emb=32, d_tok=8, d_state=8, class_count=9, seed=0)

selective = init_model(model_cfg, temporal="selective")
attention = init_model(model_cfg, temporal="attn", window_m=16)

milestones = [100, 1_000, 10_000]
records = []
records += run_bench(selective, 10_000, [parse_strategy("s3")], repeats=1, milestones=milestones)
records += run_bench(attention, 10_000, [parse_strategy("s2:16")], repeats=1, milestones=milestones)
records += run_bench(attention, 10_000, [parse_strategy("s1")], repeats=1, milestones=milestones)

print(bench_csv(records))

out = Path(__file__).with_name("throughput.svg")
out.write_text(bench_svg(records))
print(f"wrote plot with embedded data table to {out}")

s3 = {r.frame_index: r.fps for r in records if r.strategy == "s3"}
s1 = {r.frame_index: r.fps for r in records if r.strategy == "s1"}
print(f"\nstreaming fps stays flat: {s3[100]:.0f} -> {s3[10_000]:.0f}")
print(f"all-frames fps collapses: {s1[100]:.0f} -> {s1[10_000]:.1f}")
