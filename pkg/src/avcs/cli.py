"""Command-line surface: synth, train, eval, bench, stream, concat.

Option precedence: explicit flags > AVCS_SEED env var (seed only) > config
file (`key=value` lines via --config) > built-in defaults. Every failure
prints one machine-readable `ERROR kind=<class> msg=<text>` line on stderr
and exits nonzero (2 config, 3 format, 4 numeric, 5 input, 1 other).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import harness, training
from .errors import (
    AvcsError,
    FormatError,
    InvalidConfigError,
    InvalidInputError,
    NumericError,
)
from .pipeline import (
    ModelConfig,
    forward_frame,
    init_model,
    load_model,
    save_model,
    start_session,
)
from .scan import snapshot
from .stream import (
    ActivitySpan,
    SynthConfig,
    concat_streams,
    read_stream,
    synth_dataset,
    write_stream,
)

_EXIT_CODES = [
    (InvalidConfigError, 2),
    (FormatError, 3),
    (NumericError, 4),
    (InvalidInputError, 5),
    (AvcsError, 1),
]


def _parse_config_file(path: str) -> dict:
    """key=value lines; '#' starts a comment; values stay strings."""
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfigError(f"bad config line {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _resolve(args, key: str, default, cast=str):
    """flags > AVCS_SEED (for 'seed') > config file > default."""
    flag = getattr(args, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    if key == "seed":
        env = os.environ.get("AVCS_SEED")
        if env is not None:
            return int(env)
    if args.config:
        conf = _parse_config_file(args.config)
        if key in conf:
            return cast(conf[key])
    return default


# ---------------------------------------------------------------------------
# split files


def save_split(items, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = []
    for i, (stream, spans) in enumerate(items):
        name = f"{i:04d}.avcs"
        write_stream(stream, out_dir / name)
        manifest.append(
            {
                "file": name,
                "spans": [
                    {
                        "class_id": sp.class_id,
                        "start_frame": sp.start_frame,
                        "end_frame": sp.end_frame,
                        "scale_class": sp.scale_class,
                    }
                    for sp in spans
                ],
            }
        )
    (out_dir / "spans.json").write_text(json.dumps({"files": manifest}, indent=2))


def load_split(data_dir):
    data_dir = Path(data_dir)
    sidecar = data_dir / "spans.json"
    if not sidecar.exists():
        raise InvalidInputError(f"no spans.json in {data_dir}")
    manifest = json.loads(sidecar.read_text())
    items = []
    for entry in manifest["files"]:
        stream = read_stream(data_dir / entry["file"])
        spans = [
            ActivitySpan(
                class_id=sp["class_id"],
                start_frame=sp["start_frame"],
                end_frame=sp["end_frame"],
                scale_class=sp.get("scale_class", "medium"),
            )
            for sp in entry["spans"]
        ]
        items.append((stream, spans))
    if not items:
        raise InvalidInputError(f"empty split in {data_dir}")
    return items


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    seed = _resolve(args, "seed", 0, int)
    mix = tuple(float(x) for x in _resolve(args, "scale-mix", "0.34,0.33,0.33").split(","))
    cfg = dict(
        class_count=_resolve(args, "classes", 8, int),
        d_emb=_resolve(args, "d-emb", 32, int),
        scale_mix=mix,
        noise_sigma=_resolve(args, "noise-sigma", 0.35, float),
        label_arity=_resolve(args, "arity", "single"),
        spans_per_stream=_resolve(args, "spans-per-stream", 1, int),
    )
    out = Path(args.out)
    counts = {
        "train": _resolve(args, "train", 400, int),
        "val": _resolve(args, "val", 100, int),
        "test": _resolve(args, "test", 100, int),
    }
    for i, (split, n) in enumerate(counts.items()):
        if n <= 0:
            continue
        items = synth_dataset(SynthConfig(n_streams=n, **cfg), seed + i)
        save_split(items, out / split)
        print(f"wrote {n} streams to {out / split}")
    return 0


def cmd_train(args) -> int:
    data = Path(args.data)
    train_items = load_split(data / "train")
    val_items = load_split(data / "val") if (data / "val" / "spans.json").exists() else None
    first = train_items[0][0]
    seed = _resolve(args, "seed", 0, int)
    model = init_model(
        ModelConfig(
            d_emb=first.d_emb,
            class_count=first.class_count,
            d_tok=_resolve(args, "d-tok", 0, int),
            d_state=_resolve(args, "d-state", 16, int),
            label_arity=first.label_arity,
            seed=seed,
        ),
        temporal=_resolve(args, "temporal", "selective"),
        window_m=_resolve(args, "window", 16, int),
    )
    cfg = training.TrainConfig(
        epochs=_resolve(args, "epochs", 100, int),
        batch_size=_resolve(args, "batch-size", 16, int),
        lr_max=_resolve(args, "lr-max", 1e-3, float),
        lr_min=_resolve(args, "lr-min", 1e-6, float),
        restart_period=_resolve(args, "restart-period", 10, int),
        weight_decay=_resolve(args, "weight-decay", 0.01, float),
        weight_mode=_resolve(args, "weight-mode", "scene"),
        patience=_resolve(args, "patience", 20, int),
        seed=seed,
    )
    t0 = time.perf_counter()
    model, logs = training.train(train_items, model, cfg, val_items)
    print(f"trained {len(logs)} epochs in {time.perf_counter() - t0:.1f}s")
    save_model(model, args.out)
    if args.log:
        training.write_training_log(logs, args.log)
    last = logs[-1]
    print(
        f"final epoch={last.epoch} train_loss={last.train_loss:.5f} "
        f"val_loss={last.val_loss:.5f} val_metric={last.val_metric:.4f}"
    )
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    items = load_split(args.data)
    strategy = harness.parse_strategy(_resolve(args, "strategy", "s3"))
    report, _ = harness.eval_dataset(
        model,
        items,
        strategy,
        threshold=_resolve(args, "threshold", 0.5, float),
        jobs=_resolve(args, "jobs", 1, int),
    )
    print(report.to_json())
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n")
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    return 0


def cmd_bench(args) -> int:
    model = load_model(args.model)
    strategies = [
        harness.parse_strategy(s) for s in _resolve(args, "strategies", "s3").split(",")
    ]
    milestones = None
    if args.milestones:
        milestones = [int(x) for x in args.milestones.split(",")]
    records = harness.run_bench(
        model,
        n_frames=_resolve(args, "frames", 100_000, int),
        strategies=strategies,
        repeats=_resolve(args, "repeats", 3, int),
        milestones=milestones,
        seed=_resolve(args, "seed", 0, int),
    )
    csv_text = harness.bench_csv(records)
    print(csv_text, end="")
    if args.out:
        Path(args.out).write_text(csv_text)
    if args.svg:
        Path(args.svg).write_text(harness.bench_svg(records))
    return 0


def cmd_stream(args) -> int:
    model = load_model(args.model)
    stream = read_stream(args.input)
    if stream.d_emb != model.config.d_emb:
        raise InvalidInputError(
            f"stream d_emb {stream.d_emb} does not match model {model.config.d_emb}"
        )
    every = _resolve(args, "snapshot-every", 0, int)
    snap_dir = Path(args.snapshot_dir) if args.snapshot_dir else Path(".")
    if every and model.core.kind != "selective":
        raise InvalidConfigError("state snapshots require the selective temporal module")
    session = start_session(model)
    for t in range(stream.frame_count):
        tic = time.perf_counter()
        record = forward_frame(session, stream.values[t])
        ms = (time.perf_counter() - tic) * 1e3
        decoded = ",".join(str(c) for c in sorted(record.decoded))
        print(f"frame={t} decoded=[{decoded}] latency_ms={ms:.3f}")
        if every and (t + 1) % every == 0:
            path = snap_dir / f"state_{t + 1:08d}.bin"
            path.write_bytes(snapshot(session.state))
            print(f"snapshot={path}")
    return 0


def cmd_concat(args) -> int:
    streams = [read_stream(p) for p in args.inputs]
    span_lists = None
    if args.spans:
        if len(args.spans) != len(args.inputs):
            raise InvalidInputError("need one span file per input stream")
        span_lists = []
        for p in args.spans:
            data = json.loads(Path(p).read_text())
            span_lists.append(
                [
                    ActivitySpan(
                        class_id=sp["class_id"],
                        start_frame=sp["start_frame"],
                        end_frame=sp["end_frame"],
                        scale_class=sp.get("scale_class", "medium"),
                    )
                    for sp in data
                ]
            )
    merged, spans = concat_streams(streams, span_lists)
    n = write_stream(merged, args.out)
    print(f"wrote {merged.frame_count} frames ({n} bytes) to {args.out}")
    if args.spans_out:
        Path(args.spans_out).write_text(
            json.dumps(
                [
                    {
                        "class_id": sp.class_id,
                        "start_frame": sp.start_frame,
                        "end_frame": sp.end_frame,
                        "scale_class": sp.scale_class,
                    }
                    for sp in spans
                ],
                indent=2,
            )
        )
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avcs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("synth", help="generate synthetic labeled streams")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int)
    p.add_argument("--d-emb", type=int)
    p.add_argument("--train", type=int)
    p.add_argument("--val", type=int)
    p.add_argument("--test", type=int)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--arity", choices=["single", "multi"])
    p.add_argument("--spans-per-stream", type=int)
    p.add_argument("--scale-mix")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a synth data dir")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.add_argument("--temporal", choices=["selective", "rnn", "lstm", "convpool", "attn"])
    p.add_argument("--d-tok", type=int)
    p.add_argument("--d-state", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr-max", type=float)
    p.add_argument("--lr-min", type=float)
    p.add_argument("--restart-period", type=int)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--weight-mode", choices=["motion", "scene"])
    p.add_argument("--patience", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint under an input strategy")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--strategy")
    p.add_argument("--threshold", type=float)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="throughput at logarithmic frame milestones")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--frames", type=int)
    p.add_argument("--strategies")
    p.add_argument("--repeats", type=int)
    p.add_argument("--milestones")
    p.add_argument("--out")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("stream", help="stream a .avcs file frame by frame")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--snapshot-every", type=int)
    p.add_argument("--snapshot-dir")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("concat", help="concatenate streams into one long stream")
    common(p)
    p.add_argument("inputs", nargs="+")
    p.add_argument("--spans", nargs="*")
    p.add_argument("--out", required=True)
    p.add_argument("--spans-out")
    p.set_defaults(func=cmd_concat)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AvcsError as exc:
        for cls, code in _EXIT_CODES:
            if isinstance(exc, cls):
                print(f"ERROR kind={type(exc).__name__} msg={exc}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
