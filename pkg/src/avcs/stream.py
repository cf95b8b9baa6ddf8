"""Embedding-stream data model, the `.avcs` binary container, patch pooling,
the synthetic multi-scale activity generator, and stream concatenation.

An EmbeddingStream is the engine's sole input medium: one d_emb float32 vector
per frame plus per-frame labels. Streams are immutable after construction and
safe to share across threads.

Single-label streams reserve class id 0 for "no activity" (background);
activity classes occupy ids 1..class_count-1. Multi-label streams use the
empty label set for background and all ids 0..class_count-1 are activities.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .errors import (
    BadMagicError,
    InvalidConfigError,
    InvalidInputError,
    LabelRangeError,
    TruncatedPayloadError,
    VersionMismatchError,
)

MAGIC = b"AVCS"
FORMAT_VERSION = 1

#: reserved single-label class id for frames with no activity
BACKGROUND_CLASS = 0

ARITY_SINGLE = "single"
ARITY_MULTI = "multi"
_ARITY_CODES = {ARITY_SINGLE: 0, ARITY_MULTI: 1}
_ARITY_NAMES = {v: k for k, v in _ARITY_CODES.items()}

#: inclusive frame-count bounds of the three span duration regimes
SCALE_REGIMES = {
    "short": (5, 15),
    "medium": (30, 80),
    "long": (150, 400),
}


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class PatchGrid:
    """P patch-embedding vectors for one frame, shape (P, d_emb)."""

    patches: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        p = np.asarray(self.patches, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 1:
            raise InvalidInputError(f"patch grid needs shape (P>=1, d_emb), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise InvalidInputError("patch grid contains non-finite entries")
        object.__setattr__(self, "patches", _frozen(p))

    @property
    def patch_count(self) -> int:
        return self.patches.shape[0]

    @property
    def d_emb(self) -> int:
        return self.patches.shape[1]


@dataclass(frozen=True, eq=False)
class FrameEmbedding:
    """A single per-frame embedding vector."""

    values: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise InvalidInputError(f"embedding must be a vector, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("embedding contains non-finite entries")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def d_emb(self) -> int:
        return self.values.shape[0]


def _canon_labels(labels, arity: str, class_count: int, n: int):
    if arity == ARITY_SINGLE:
        out = tuple(int(c) for c in labels)
        bad = [c for c in out if not 0 <= c < class_count]
    else:
        out = tuple(frozenset(int(c) for c in s) for s in labels)
        bad = [c for s in out for c in s if not 0 <= c < class_count]
    if bad:
        raise LabelRangeError(f"label ids {sorted(set(bad))} out of range [0, {class_count})")
    if len(out) != n:
        raise InvalidInputError(f"{len(out)} labels for {n} frames")
    return out


@dataclass(frozen=True, eq=False)
class EmbeddingStream:
    """Ordered per-frame float32 embeddings plus per-frame labels.

    `values` has shape (frame_count, d_emb) and is stored float32, matching
    the on-disk precision so write->read round-trips are bit-exact. Labels
    are ints (single) or frozensets of ints (multi), one entry per frame.
    """

    values: np.ndarray
    labels: tuple
    label_arity: str
    class_count: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 2:
            raise InvalidInputError(f"stream values must be (n, d_emb), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("stream contains non-finite values")
        if self.label_arity not in _ARITY_CODES:
            raise InvalidInputError(f"unknown label arity {self.label_arity!r}")
        if self.class_count < 1:
            raise InvalidInputError("class_count must be >= 1")
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(
            self, "labels", _canon_labels(self.labels, self.label_arity, self.class_count, v.shape[0])
        )

    @property
    def frame_count(self) -> int:
        return self.values.shape[0]

    @property
    def d_emb(self) -> int:
        return self.values.shape[1]

    def frame(self, i: int) -> FrameEmbedding:
        return FrameEmbedding(self.values[i], frame_index=i)

    @property
    def frames(self) -> list[FrameEmbedding]:
        return [self.frame(i) for i in range(self.frame_count)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingStream):
            return NotImplemented
        return (
            self.label_arity == other.label_arity
            and self.class_count == other.class_count
            and self.values.shape == other.values.shape
            and np.array_equal(
                self.values.view(np.uint32), other.values.view(np.uint32)
            )
            and self.labels == other.labels
        )


@dataclass(frozen=True)
class ActivitySpan:
    """One activity occurrence: class id plus inclusive frame range."""

    class_id: int
    start_frame: int
    end_frame: int
    scale_class: str = "medium"

    def __post_init__(self):
        if self.start_frame > self.end_frame:
            raise InvalidInputError(
                f"span start {self.start_frame} after end {self.end_frame}"
            )
        if self.start_frame < 0:
            raise InvalidInputError("span starts before frame 0")
        if self.scale_class not in SCALE_REGIMES:
            raise InvalidInputError(f"unknown scale class {self.scale_class!r}")

    @property
    def length(self) -> int:
        return self.end_frame - self.start_frame + 1

    def shifted(self, offset: int) -> "ActivitySpan":
        return ActivitySpan(
            self.class_id, self.start_frame + offset, self.end_frame + offset, self.scale_class
        )


# ---------------------------------------------------------------------------
# patch pooling


def pool_patches(grid: PatchGrid) -> FrameEmbedding:
    """Average the patch embeddings of one frame into a single embedding.

    Accumulates in float64 in patch order so the result is reproducible
    bit-for-bit by any implementation that sums rows in the same order
    (the extractor tool mirrors this exactly).
    """
    acc = np.zeros(grid.d_emb, dtype=np.float64)
    for row in grid.patches:
        acc += row
    return FrameEmbedding(acc / grid.patch_count, frame_index=grid.frame_index)


# ---------------------------------------------------------------------------
# binary container

_HEADER = struct.Struct("<4sIIQBI")  # magic, version, d_emb, frame_count, arity, class_count


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedPayloadError(f"stream truncated while reading {what}")
    return buf


def write_stream(stream: EmbeddingStream, sink) -> int:
    """Serialize a stream to a path or binary file object; returns byte count."""
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "wb") as f:
            return write_stream(stream, f)

    n = 0
    n += sink.write(
        _HEADER.pack(
            MAGIC,
            FORMAT_VERSION,
            stream.d_emb,
            stream.frame_count,
            _ARITY_CODES[stream.label_arity],
            stream.class_count,
        )
    )
    single = stream.label_arity == ARITY_SINGLE
    for i in range(stream.frame_count):
        n += sink.write(stream.values[i].astype("<f4", copy=False).tobytes())
        if single:
            n += sink.write(struct.pack("<I", stream.labels[i]))
        else:
            ids = sorted(stream.labels[i])
            n += sink.write(struct.pack(f"<I{len(ids)}I", len(ids), *ids))
    return n


def read_stream(source) -> EmbeddingStream:
    """Parse a `.avcs` container from a path, bytes, or binary file object."""
    if isinstance(source, (bytes, bytearray)):
        return read_stream(io.BytesIO(source))
    if isinstance(source, str) or hasattr(source, "__fspath__"):
        with open(source, "rb") as f:
            return read_stream(f)

    raw = _read_exact(source, _HEADER.size, "header")
    magic, version, d_emb, frame_count, arity_code, class_count = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise BadMagicError(f"expected magic {MAGIC!r}, found {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported version {version}")
    if arity_code not in _ARITY_NAMES:
        raise TruncatedPayloadError(f"unknown label arity code {arity_code}")
    arity = _ARITY_NAMES[arity_code]

    values = np.empty((frame_count, d_emb), dtype=np.float32)
    labels = []
    rec = 4 * d_emb
    for i in range(frame_count):
        values[i] = np.frombuffer(_read_exact(source, rec, f"frame {i}"), dtype="<f4")
        if arity == ARITY_SINGLE:
            (cid,) = struct.unpack("<I", _read_exact(source, 4, f"label {i}"))
            if cid >= class_count:
                raise LabelRangeError(f"frame {i} labeled {cid} >= class_count {class_count}")
            labels.append(cid)
        else:
            (k,) = struct.unpack("<I", _read_exact(source, 4, f"label count {i}"))
            ids = struct.unpack(f"<{k}I", _read_exact(source, 4 * k, f"label set {i}"))
            bad = [c for c in ids if c >= class_count]
            if bad:
                raise LabelRangeError(f"frame {i} labels {bad} >= class_count {class_count}")
            labels.append(frozenset(ids))
    return EmbeddingStream(values, tuple(labels), arity, class_count)


# ---------------------------------------------------------------------------
# synthetic multi-scale generator


@dataclass(frozen=True)
class SynthConfig:
    """Knobs of the synthetic activity generator.

    class_count counts *activity* classes; single-label streams get one extra
    background class at id 0. scale_mix gives the (short, medium, long) draw
    probabilities for span durations. Class prototypes are drawn from
    prototype_seed, NOT from the per-dataset seed, so train/val/test splits
    generated with different seeds but one config share the same classes.
    """

    class_count: int
    d_emb: int
    n_streams: int
    scale_mix: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    noise_sigma: float = 0.35
    label_arity: str = ARITY_SINGLE
    spans_per_stream: int = 1
    background_len: tuple[int, int] = (10, 50)
    prototype_scale: float = 1.0
    prototype_seed: int = 1

    def __post_init__(self):
        if self.class_count < 2:
            raise InvalidConfigError("need at least 2 activity classes")
        if self.d_emb < 4:
            raise InvalidConfigError("d_emb must be >= 4")
        if self.n_streams < 1:
            raise InvalidConfigError("n_streams must be >= 1")
        if self.spans_per_stream < 1:
            raise InvalidConfigError("spans_per_stream must be >= 1")
        if self.noise_sigma < 0:
            raise InvalidConfigError("noise_sigma must be >= 0")
        if abs(sum(self.scale_mix) - 1.0) > 1e-9 or min(self.scale_mix) < 0:
            raise InvalidConfigError("scale_mix must be a probability triple")


def _prototype_bank(cfg: SynthConfig, rng: np.random.Generator):
    """One smooth latent trajectory per activity class.

    Each dimension is a sum of 3 low-frequency sinusoids of the span's
    *relative* phase u in [0, 1], so a short span traverses the same curve
    faster than a long one and temporal order carries the class signal.
    All classes share one amplitude profile per sinusoid slot; they differ
    only in frequency/phase, which keeps single frames ambiguous between
    classes and forces temporal integration.
    """
    k = 3
    amp = rng.uniform(0.4, 1.0, size=(k, cfg.d_emb)) * cfg.prototype_scale
    banks = []
    for _ in range(cfg.class_count):
        freq = rng.uniform(0.5, 2.5, size=(k, cfg.d_emb))
        phase = rng.uniform(0.0, 2 * np.pi, size=(k, cfg.d_emb))
        banks.append((amp, freq, phase))
    return banks


def _eval_prototype(bank, u: np.ndarray) -> np.ndarray:
    amp, freq, phase = bank
    # (n, k, d) -> (n, d)
    return np.sum(
        amp[None] * np.sin(2 * np.pi * freq[None] * u[:, None, None] + phase[None]),
        axis=1,
    )


def synth_dataset(
    config: SynthConfig, seed: int
) -> list[tuple[EmbeddingStream, list[ActivitySpan]]]:
    """Generate labeled streams with spans drawn from three duration regimes.

    Identical (config, seed) pairs produce bit-identical output.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    banks = _prototype_bank(config, np.random.Generator(np.random.PCG64(config.prototype_seed)))
    single = config.label_arity == ARITY_SINGLE
    stream_classes = config.class_count + 1 if single else config.class_count
    regimes = list(SCALE_REGIMES)

    def draw_span_shape():
        scale = regimes[rng.choice(3, p=np.asarray(config.scale_mix))]
        lo, hi = SCALE_REGIMES[scale]
        length = int(rng.integers(lo, hi + 1))
        cls = int(rng.integers(0, config.class_count))
        return scale, length, cls

    out = []
    for _ in range(config.n_streams):
        if single:
            # activities never overlap: background, span, background, ...
            segments = []
            spans = []
            cursor = 0

            def background(lo_hi=config.background_len):
                nonlocal cursor
                n = int(rng.integers(lo_hi[0], lo_hi[1] + 1))
                segments.append(rng.normal(0.0, 1.0, size=(n, config.d_emb)))
                cursor += n

            background()
            for _ in range(config.spans_per_stream):
                scale, length, cls = draw_span_shape()
                u = (np.arange(length) + 0.5) / length
                proto = _eval_prototype(banks[cls], u)
                segments.append(proto + rng.normal(0.0, config.noise_sigma, size=proto.shape))
                spans.append(
                    ActivitySpan(cls + 1, cursor, cursor + length - 1, scale)
                )
                cursor += length
                background()
            values = np.concatenate(segments, axis=0).astype(np.float32)
            n = values.shape[0]
            labels = np.zeros(n, dtype=np.int64)
            for sp in spans:
                labels[sp.start_frame : sp.end_frame + 1] = sp.class_id
            label_tuple = tuple(int(c) for c in labels)
        else:
            # activities may run simultaneously: spans placed at random
            # offsets on one canvas, overlapping frames add their prototypes
            shapes = [draw_span_shape() for _ in range(config.spans_per_stream)]
            slack = sum(int(rng.integers(*config.background_len)) for _ in range(2))
            n = max(s[1] for s in shapes) + slack
            spans = []
            for scale, length, cls in shapes:
                start = int(rng.integers(0, n - length + 1))
                spans.append(ActivitySpan(cls, start, start + length - 1, scale))
            spans.sort(key=lambda sp: (sp.start_frame, sp.class_id))
            sets = [set() for _ in range(n)]
            signal = np.zeros((n, config.d_emb))
            for sp in spans:
                u = (np.arange(sp.length) + 0.5) / sp.length
                signal[sp.start_frame : sp.end_frame + 1] += _eval_prototype(banks[sp.class_id], u)
                for t in range(sp.start_frame, sp.end_frame + 1):
                    sets[t].add(sp.class_id)
            covered = np.array([bool(s) for s in sets])
            noise = np.where(
                covered[:, None],
                rng.normal(0.0, config.noise_sigma, size=(n, config.d_emb)),
                rng.normal(0.0, 1.0, size=(n, config.d_emb)),
            )
            values = (signal + noise).astype(np.float32)
            label_tuple = tuple(frozenset(s) for s in sets)
        out.append(
            (EmbeddingStream(values, label_tuple, config.label_arity, stream_classes), spans)
        )
    return out


# ---------------------------------------------------------------------------
# concatenation


def concat_streams(
    streams: Sequence[EmbeddingStream],
    span_lists: Sequence[Iterable[ActivitySpan]] | None = None,
) -> tuple[EmbeddingStream, list[ActivitySpan]]:
    """Concatenate streams into one long stream, remapping span frame indices.

    All inputs must agree on d_emb, label arity, and class_count.
    """
    if not streams:
        raise InvalidInputError("nothing to concatenate")
    first = streams[0]
    for s in streams[1:]:
        if s.d_emb != first.d_emb:
            raise InvalidInputError(f"d_emb mismatch: {s.d_emb} != {first.d_emb}")
        if s.label_arity != first.label_arity or s.class_count != first.class_count:
            raise InvalidInputError("label space mismatch between streams")
    if span_lists is not None and len(span_lists) != len(streams):
        raise InvalidInputError("span_lists must parallel streams")

    values = np.concatenate([s.values for s in streams], axis=0)
    labels = tuple(lab for s in streams for lab in s.labels)
    merged = EmbeddingStream(values, labels, first.label_arity, first.class_count)

    spans: list[ActivitySpan] = []
    if span_lists is not None:
        offset = 0
        for s, sl in zip(streams, span_lists):
            spans.extend(sp.shifted(offset) for sp in sl)
            offset += s.frame_count
    return merged, spans
