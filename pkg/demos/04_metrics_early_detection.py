"""Evaluation metrics, with the early detection rate in the spotlight.

EDR measures how far into an activity the model first names it: detection at
onset scores 0, halfway scores 0.5, and a span never detected inside its own
extent adds a full 1.0 penalty for that class.
"""

import numpy as np

from avcs import ActivitySpan, EvalTrace, PredictionRecord
from avcs.metrics import edr, evaluate, jaccard, mean_average_precision, video_accuracy


def single_label_trace(decoded_ids, spans, n_classes=4):
    records = []
    for i, cid in enumerate(decoded_ids):
        logits = np.full(n_classes, -3.0)
        logits[cid] = 3.0
        records.append(PredictionRecord(frame_index=i, logits=logits, decoded=frozenset([cid])))
    return EvalTrace(tuple(records), tuple(spans), "single", n_classes)


span = ActivitySpan(class_id=2, start_frame=4, end_frame=13, scale_class="short")


for story, decoded in [
    ("detected at onset", [0] * 4 + [2] * 10),
    ("detected halfway", [0] * 9 + [2] * 5),
    ("detected on the last frame", [0] * 13 + [2]),
    ("never detected inside the span", [0] * 14),
]:
    tr = single_label_trace(decoded, [span])
    per_class, mean = edr(tr)
    print(f"{story:<32} -> EDR {mean:.2f}")

# --- the full report over a small batch of traces --------------------------
good = single_label_trace([0] * 4 + [2] * 10, [span])
late = single_label_trace([0] * 9 + [2] * 5, [span])
report = evaluate([good, late])
print("\nreport:", {k: (None if v is None else round(v, 3)) for k, v in report.as_dict().items()})
print("any-frame video accuracy:", video_accuracy([good, late]))
print("per-frame jaccard (good trace):", round(jaccard(good), 3))

# --- multi-label ranking quality --------------------------------------------
rng = np.random.default_rng(3)
records = []
gt = ActivitySpan(class_id=1, start_frame=2, end_frame=7, scale_class="short")
for i in range(10):
    logits = rng.normal(size=3)
    logits[1] += 3.0 if 2 <= i <= 7 else -1.0  # class 1 scores high inside its span
    decoded = frozenset(np.flatnonzero(logits > 0).tolist())
    records.append(PredictionRecord(frame_index=i, logits=logits, decoded=decoded))
multi = EvalTrace(tuple(records), (gt,), "multi", 3)
print("mAP over all frames:", round(mean_average_precision([multi], "all_frames"), 3))
print("mAP at the last frame:", round(mean_average_precision([multi], "last_frame"), 3))
