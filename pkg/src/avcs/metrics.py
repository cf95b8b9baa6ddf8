"""Evaluation metrics over per-frame prediction traces.

* video accuracy: a video counts correct iff its ground-truth class shows up
  in the decoded set of at least one frame;
* early detection rate (EDR): fraction of a span's duration elapsed before
  its class first enters the decoded set, searched within the span; a span
  never detected inside its own extent contributes exactly 1.0;
* mean average precision over all frames or the last frame per video;
* per-frame Jaccard index between decoded and ground-truth label sets.

All functions are pure over immutable traces.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .mathutil import sigmoid
from .stream import ARITY_MULTI, ARITY_SINGLE, BACKGROUND_CLASS


@dataclass(frozen=True, eq=False)
class EvalTrace:
    """Per-frame prediction records plus ground-truth spans for one video."""

    records: tuple
    spans: tuple
    arity: str
    class_count: int

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "spans", tuple(self.spans))
        for i, rec in enumerate(self.records):
            if rec.frame_index != i:
                raise InvalidInputError("record frame indices must be contiguous from 0")
        n = len(self.records)
        for sp in self.spans:
            if sp.end_frame >= n:
                raise InvalidInputError(f"span {sp} exceeds trace length {n}")
        if self.arity not in (ARITY_SINGLE, ARITY_MULTI):
            raise InvalidInputError(f"unknown arity {self.arity!r}")

    @property
    def n_frames(self) -> int:
        return len(self.records)

    def gt_set(self, frame: int) -> frozenset:
        classes = {sp.class_id for sp in self.spans if sp.start_frame <= frame <= sp.end_frame}
        if not classes and self.arity == ARITY_SINGLE:
            classes = {BACKGROUND_CLASS}
        return frozenset(classes)


@dataclass(frozen=True)
class MetricReport:
    """Fixed-key metric bundle; fields not defined for an arity stay None."""

    accuracy: float | None = None
    map_all: float | None = None
    map_last: float | None = None
    jaccard: float | None = None
    edr: float | None = None

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "map_all": self.map_all,
            "map_last": self.map_last,
            "jaccard": self.jaccard,
            "edr": self.edr,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        keys = list(self.as_dict())
        writer.writerow(keys)
        writer.writerow(["" if self.as_dict()[k] is None else f"{self.as_dict()[k]:.10g}" for k in keys])
        return buf.getvalue()


def video_accuracy(traces) -> float:
    """Fraction of videos whose ground-truth classes all appear in the decoded
    set of some frame (for single-activity videos: the any-frame rule)."""
    if not traces:
        raise InvalidInputError("no traces to score")
    correct = 0
    for tr in traces:
        wanted = {sp.class_id for sp in tr.spans}
        seen = set()
        for rec in tr.records:
            seen |= rec.decoded
        correct += bool(wanted) and wanted <= seen
    return correct / len(traces)


def span_detection(trace: EvalTrace, span) -> int | None:
    """First frame within the span at which its class is decoded, else None."""
    for t in range(span.start_frame, span.end_frame + 1):
        if span.class_id in trace.records[t].decoded:
            return t
    return None


def _span_edr(trace: EvalTrace, span) -> float:
    hit = span_detection(trace, span)
    if hit is None:
        return 1.0  # undetected: full-duration penalty
    return (hit - span.start_frame) / span.length


def edr(trace: EvalTrace) -> tuple[dict, float]:
    """Per-class mean EDR over the trace's spans, plus the mean over classes."""
    return edr_corpus([trace])


def edr_corpus(traces) -> tuple[dict, float]:
    by_class: dict[int, list[float]] = {}
    for tr in traces:
        for sp in tr.spans:
            by_class.setdefault(sp.class_id, []).append(_span_edr(tr, sp))
    if not by_class:
        raise InvalidInputError("no spans to score")
    per_class = {c: float(np.mean(v)) for c, v in sorted(by_class.items())}
    return per_class, float(np.mean(list(per_class.values())))


def _average_precision(items) -> float:
    """items: (score, tiebreak, is_positive); mean precision at each positive."""
    ranked = sorted(items, key=lambda it: (-it[0], it[1]))
    hits = 0
    precisions = []
    for rank, (_, _, pos) in enumerate(ranked, start=1):
        if pos:
            hits += 1
            precisions.append(hits / rank)
    return float(np.mean(precisions))


def mean_average_precision(traces, scope: str = "all_frames") -> float:
    """Per-class AP of sigmoid scores ranked descending, averaged over the
    classes with at least one positive. Ties break by (video, frame) order."""
    if scope not in ("all_frames", "last_frame"):
        raise InvalidInputError(f"unknown mAP scope {scope!r}")
    if not traces:
        raise InvalidInputError("no traces to score")
    class_count = traces[0].class_count
    if any(tr.class_count != class_count for tr in traces):
        raise InvalidInputError("traces disagree on class_count")
    ap_values = []
    for c in range(class_count):
        items = []
        positives = 0
        for vi, tr in enumerate(traces):
            if scope == "all_frames":
                # positives come from span coverage: mAP ranks activity
                # presence, so the single-label background filler never
                # becomes a ranked class
                covered = np.zeros(tr.n_frames, dtype=bool)
                for sp in tr.spans:
                    if sp.class_id == c:
                        covered[sp.start_frame : sp.end_frame + 1] = True
                for rec in tr.records:
                    pos = bool(covered[rec.frame_index])
                    positives += pos
                    items.append((float(sigmoid(rec.logits[c])), (vi, rec.frame_index), pos))
            else:
                rec = tr.records[-1]
                pos = c in {sp.class_id for sp in tr.spans}
                positives += pos
                items.append((float(sigmoid(rec.logits[c])), (vi, rec.frame_index), pos))
        if positives:
            ap_values.append(_average_precision(items))
    if not ap_values:
        raise InvalidInputError("no class has a positive example")
    return float(np.mean(ap_values))


def jaccard(trace: EvalTrace) -> float:
    """Mean per-frame |pred n gt| / |pred u gt|; two empty sets agree (1.0)."""
    vals = []
    for rec in trace.records:
        gt = trace.gt_set(rec.frame_index)
        pred = rec.decoded
        union = pred | gt
        vals.append(1.0 if not union else len(pred & gt) / len(union))
    if not vals:
        raise InvalidInputError("empty trace")
    return float(np.mean(vals))


def jaccard_corpus(traces) -> float:
    return float(np.mean([jaccard(tr) for tr in traces]))


def evaluate(traces) -> MetricReport:
    """Assemble the per-arity metric bundle for a list of traces."""
    if not traces:
        raise InvalidInputError("no traces to score")
    arity = traces[0].arity
    has_spans = any(tr.spans for tr in traces)
    report = {
        "jaccard": jaccard_corpus(traces),
        "edr": edr_corpus(traces)[1] if has_spans else None,
    }
    if arity == ARITY_SINGLE:
        report["accuracy"] = video_accuracy(traces) if has_spans else None
    else:
        report["map_all"] = mean_average_precision(traces, "all_frames")
        report["map_last"] = mean_average_precision(traces, "last_frame")
    return MetricReport(**report)


# ---------------------------------------------------------------------------
# model-facing helpers


def traces_from_model(model, dataset, threshold: float = 0.5) -> list[EvalTrace]:
    """Whole-sequence traces for (stream, spans) pairs."""
    from .pipeline import forward_sequence

    traces = []
    for stream, spans in dataset:
        records = forward_sequence(model, stream, threshold)
        traces.append(
            EvalTrace(
                records=tuple(records),
                spans=tuple(spans),
                arity=stream.label_arity,
                class_count=stream.class_count,
            )
        )
    return traces


def quick_metric(model, dataset) -> float:
    """Scalar progress metric used in training logs: video accuracy for
    single-label data, all-frame mAP for multi-label."""
    traces = traces_from_model(model, dataset)
    if traces[0].arity == ARITY_SINGLE:
        return video_accuracy(traces)
    return mean_average_precision(traces, "all_frames")
