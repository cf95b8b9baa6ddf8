"""Input strategies and the throughput benchmark.

Three ways to feed a model at timestep N:
  S1 all_frames     re-run on the whole prefix 1..N every step
  S2 sliding_window re-run on the trailing m frames every step
  S3 single_frame   stream statefully, one frame per step

The bench reports per-frame throughput at logarithmic frame milestones.
Streaming (S3) runs soup-to-nuts over every frame; the stateless re-run
strategies are sampled at each milestone (a handful of timed steps at that
prefix length), since their per-step work is independent of having executed
the steps before. Timings wrap compute only, never file I/O.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, InvalidInputError
from .metrics import EvalTrace, MetricReport, evaluate
from .pipeline import Model, PredictionRecord, forward_frame, forward_sequence, start_session
from .stream import EmbeddingStream

DEFAULT_MILESTONES = (100, 1_000, 10_000, 100_000)


@dataclass(frozen=True)
class InputStrategy:
    kind: str  # "all_frames" | "sliding_window" | "single_frame"
    m: int = 0

    def __post_init__(self):
        if self.kind not in ("all_frames", "sliding_window", "single_frame"):
            raise InvalidConfigError(f"unknown input strategy {self.kind!r}")
        if self.kind == "sliding_window" and self.m < 1:
            raise InvalidConfigError("sliding window needs m >= 1")

    @property
    def tag(self) -> str:
        return {"all_frames": "s1", "sliding_window": f"s2:{self.m}", "single_frame": "s3"}[
            self.kind
        ]


def parse_strategy(text: str) -> InputStrategy:
    t = text.strip().lower()
    if t == "s1":
        return InputStrategy("all_frames")
    if t == "s3":
        return InputStrategy("single_frame")
    if t.startswith("s2"):
        _, _, m = t.partition(":")
        if not m:
            raise InvalidConfigError("sliding window strategy needs a size, e.g. s2:16")
        return InputStrategy("sliding_window", int(m))
    raise InvalidConfigError(f"unknown strategy {text!r} (expected s1, s2:<m>, or s3)")


def run_strategy(
    model: Model, stream: EmbeddingStream, strategy: InputStrategy, threshold: float = 0.5
) -> list[PredictionRecord]:
    """Per-step decisions for one stream under the given feeding strategy."""
    values = stream.values if isinstance(stream, EmbeddingStream) else np.asarray(stream)
    n = values.shape[0]
    if strategy.kind == "single_frame":
        session = start_session(model)
        return [forward_frame(session, values[t], threshold) for t in range(n)]
    records = []
    for t in range(n):
        lo = 0 if strategy.kind == "all_frames" else max(0, t - strategy.m + 1)
        last = forward_sequence(model, values[lo : t + 1], threshold)[-1]
        records.append(
            PredictionRecord(frame_index=t, logits=last.logits, decoded=last.decoded)
        )
    return records


def eval_dataset(
    model: Model,
    dataset,
    strategy: InputStrategy,
    threshold: float = 0.5,
    jobs: int = 1,
) -> tuple[MetricReport, list[EvalTrace]]:
    """Strategy-driven evaluation over (stream, spans) pairs."""
    if not dataset:
        raise InvalidInputError("evaluation dataset is empty")

    def one(item):
        stream, spans = item
        records = run_strategy(model, stream, strategy, threshold)
        return EvalTrace(
            records=tuple(records),
            spans=tuple(spans),
            arity=stream.label_arity,
            class_count=stream.class_count,
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            traces = list(pool.map(one, dataset))
    else:
        traces = [one(item) for item in dataset]
    return evaluate(traces), traces


# ---------------------------------------------------------------------------
# bench


@dataclass(frozen=True)
class BenchRecord:
    frame_index: int
    cumulative_seconds: float
    fps: float
    strategy: str
    temporal: str

    def __post_init__(self):
        if self.fps <= 0:
            raise InvalidInputError("fps must be positive")


def _bench_streaming(model: Model, values: np.ndarray, milestones) -> list[tuple[int, float, float]]:
    """Run every frame through a live session; FPS at a milestone is measured
    over the frames since the previous milestone."""
    session = start_session(model)
    out = []
    total = 0.0
    prev_frame = 0
    prev_total = 0.0
    targets = list(milestones)
    t_next = targets.pop(0)
    for t in range(values.shape[0]):
        tic = time.perf_counter()
        forward_frame(session, values[t])
        total += time.perf_counter() - tic
        if t + 1 == t_next:
            window = (t + 1 - prev_frame) / max(total - prev_total, 1e-12)
            out.append((t + 1, total, window))
            prev_frame, prev_total = t + 1, total
            if not targets:
                break
            t_next = targets.pop(0)
    return out


def _bench_reruns(
    model: Model, values: np.ndarray, strategy: InputStrategy, milestones, min_window: float = 0.05
) -> list[tuple[int, float, float]]:
    """Sample per-step latency at each milestone prefix length."""
    out = []
    total = 0.0
    for n in milestones:
        steps = 0
        spent = 0.0
        t = n - 1
        while spent < min_window or steps < 3:
            lo = 0 if strategy.kind == "all_frames" else max(0, t - strategy.m + 1)
            window = values[lo : t + 1]
            tic = time.perf_counter()
            forward_sequence(model, window)
            spent += time.perf_counter() - tic
            steps += 1
            if steps >= 50:
                break
        total += spent
        out.append((n, total, steps / spent))
    return out


def run_bench(
    model: Model,
    n_frames: int,
    strategies,
    repeats: int = 3,
    milestones=None,
    seed: int = 0,
) -> list[BenchRecord]:
    """Throughput at logarithmic frame milestones, averaged over repeats."""
    if n_frames < 1:
        raise InvalidInputError("n_frames must be >= 1")
    if repeats < 1:
        raise InvalidConfigError("repeats must be >= 1")
    if milestones is None:
        milestones = [m for m in DEFAULT_MILESTONES if m <= n_frames] or [n_frames]
    milestones = sorted(set(int(m) for m in milestones))
    if milestones[-1] > n_frames:
        raise InvalidConfigError("milestone beyond n_frames")

    rng = np.random.Generator(np.random.PCG64(seed))
    values = rng.normal(0.0, 1.0, size=(n_frames, model.config.d_emb))

    records = []
    for strategy in strategies:
        runs = []
        for _ in range(repeats):
            if strategy.kind == "single_frame":
                runs.append(_bench_streaming(model, values, milestones))
            else:
                runs.append(_bench_reruns(model, values, strategy, milestones))
        for i, frame in enumerate(milestones):
            cum = float(np.mean([r[i][1] for r in runs]))
            fps = float(np.mean([r[i][2] for r in runs]))
            records.append(
                BenchRecord(
                    frame_index=frame,
                    cumulative_seconds=cum,
                    fps=fps,
                    strategy=strategy.tag,
                    temporal=model.core.kind,
                )
            )
    return records


def bench_csv(records) -> str:
    lines = ["frame_index,cumulative_seconds,fps,strategy,temporal"]
    for r in records:
        lines.append(
            f"{r.frame_index},{r.cumulative_seconds:.6g},{r.fps:.6g},{r.strategy},{r.temporal}"
        )
    return "\n".join(lines) + "\n"


def bench_svg(records, width: int = 640, height: int = 400) -> str:
    """Standalone SVG line plot of FPS vs frame milestone (log-log), with the
    underlying numbers embedded as a text table."""
    groups: dict[str, list[BenchRecord]] = {}
    for r in records:
        groups.setdefault(f"{r.temporal}/{r.strategy}", []).append(r)
    xs = sorted({r.frame_index for r in records})
    all_fps = [r.fps for r in records]
    lo, hi = min(all_fps), max(all_fps)
    lo, hi = lo / 1.5, hi * 1.5
    pad = 50

    def px(x):
        return pad + (np.log10(x) - np.log10(xs[0])) / max(
            np.log10(xs[-1]) - np.log10(xs[0]), 1e-9
        ) * (width - 2 * pad)

    def py(y):
        return height - pad - (np.log10(y) - np.log10(lo)) / (np.log10(hi) - np.log10(lo)) * (
            height - 2 * pad
        )

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width/2}" y="20" text-anchor="middle" font-size="13">frames processed vs FPS</text>',
    ]
    for i, (name, rs) in enumerate(sorted(groups.items())):
        rs = sorted(rs, key=lambda r: r.frame_index)
        pts = " ".join(f"{px(r.frame_index):.1f},{py(r.fps):.1f}" for r in rs)
        color = colors[i % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        parts.append(
            f'<text x="{width - pad + 4}" y="{py(rs[-1].fps):.1f}" font-size="10" fill="{color}">{name}</text>'
        )
    for x in xs:
        parts.append(
            f'<text x="{px(x):.1f}" y="{height - pad + 16}" text-anchor="middle" font-size="10">{x}</text>'
        )
    parts.append(f"<!--\n{bench_csv(records)}-->")
    parts.append("</svg>")
    return "\n".join(parts)
