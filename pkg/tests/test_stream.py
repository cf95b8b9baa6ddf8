import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avcs import (
    ActivitySpan,
    BadMagicError,
    EmbeddingStream,
    InvalidConfigError,
    InvalidInputError,
    LabelRangeError,
    PatchGrid,
    SynthConfig,
    TruncatedPayloadError,
    VersionMismatchError,
    concat_streams,
    pool_patches,
    read_stream,
    synth_dataset,
    write_stream,
)
from avcs.stream import SCALE_REGIMES


def make_stream(values, labels, arity="single", class_count=4):
    return EmbeddingStream(np.asarray(values, dtype=np.float32), labels, arity, class_count)


# ---------------------------------------------------------------------------
# pooling


class TestPoolPatches:
    def test_single_patch_is_identity(self):
        out = pool_patches(PatchGrid([[1.0, 2.0, 3.0]]))
        np.testing.assert_array_equal(out.values, [1.0, 2.0, 3.0])

    def test_two_patch_mean(self):
        out = pool_patches(PatchGrid([[0.0, 0.0], [2.0, 4.0]]))
        np.testing.assert_array_equal(out.values, [1.0, 2.0])

    def test_matches_summation_oracle(self):
        rng = np.random.default_rng(7)
        patches = rng.normal(size=(7, 16))
        out = pool_patches(PatchGrid(patches))
        # independent oracle: per-column scalar summation
        expected = np.array(
            [sum(float(patches[i, j]) for i in range(7)) / 7 for j in range(16)]
        )
        np.testing.assert_allclose(out.values, expected, rtol=0, atol=1e-12)

    def test_empty_grid_rejected(self):
        with pytest.raises(InvalidInputError):
            PatchGrid(np.zeros((0, 3)))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        patches = rng.normal(size=(rng.integers(1, 9), 5))
        perm = rng.permutation(patches.shape[0])
        a = pool_patches(PatchGrid(patches)).values
        b = pool_patches(PatchGrid(patches[perm])).values
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


# ---------------------------------------------------------------------------
# binary container


def random_stream(rng):
    n = int(rng.integers(0, 12))
    d = int(rng.integers(1, 9))
    classes = int(rng.integers(1, 6))
    arity = "single" if rng.random() < 0.5 else "multi"
    values = rng.normal(size=(n, d)).astype(np.float32)
    if arity == "single":
        labels = tuple(int(c) for c in rng.integers(0, classes, size=n))
    else:
        labels = tuple(
            frozenset(int(c) for c in rng.choice(classes, size=rng.integers(0, classes + 1), replace=False))
            for _ in range(n)
        )
    return EmbeddingStream(values, labels, arity, classes)


class TestRoundTrip:
    def test_empty_stream(self):
        s = make_stream(np.zeros((0, 3)), ())
        buf = io.BytesIO()
        write_stream(s, buf)
        back = read_stream(buf.getvalue())
        assert back == s
        assert back.frame_count == 0

    def test_three_frame_single_label(self):
        s = make_stream([[1, 2], [3, 4], [5, 6]], (0, 1, 3))
        buf = io.BytesIO()
        n = write_stream(s, buf)
        assert n == len(buf.getvalue())
        assert read_stream(buf.getvalue()) == s

    def test_corrupted_magic(self):
        s = make_stream([[1.0]], (0,), class_count=1)
        buf = io.BytesIO()
        write_stream(s, buf)
        blob = bytearray(buf.getvalue())
        blob[:4] = b"XVCS"
        with pytest.raises(BadMagicError):
            read_stream(bytes(blob))

    def test_version_mismatch(self):
        s = make_stream([[1.0]], (0,), class_count=1)
        buf = io.BytesIO()
        write_stream(s, buf)
        blob = bytearray(buf.getvalue())
        blob[4] = 99
        with pytest.raises(VersionMismatchError):
            read_stream(bytes(blob))

    def test_truncated_payload(self):
        s = make_stream([[1.0, 2.0]] * 3, (0, 1, 2))
        buf = io.BytesIO()
        write_stream(s, buf)
        with pytest.raises(TruncatedPayloadError):
            read_stream(buf.getvalue()[:-3])

    def test_label_out_of_range(self):
        s = make_stream([[1.0]], (3,), class_count=4)
        buf = io.BytesIO()
        write_stream(s, buf)
        blob = bytearray(buf.getvalue())
        blob[-4:] = (250).to_bytes(4, "little")
        with pytest.raises(LabelRangeError):
            read_stream(bytes(blob))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_round_trip_random_streams(self, seed):
        s = random_stream(np.random.default_rng(seed))
        buf = io.BytesIO()
        write_stream(s, buf)
        assert read_stream(buf.getvalue()) == s


# ---------------------------------------------------------------------------
# synthetic generator


class TestSynth:
    def test_deterministic_bytes(self):
        cfg = SynthConfig(class_count=3, d_emb=8, n_streams=4)
        a = synth_dataset(cfg, seed=7)
        b = synth_dataset(cfg, seed=7)
        for (sa, spa), (sb, spb) in zip(a, b):
            ba, bb = io.BytesIO(), io.BytesIO()
            write_stream(sa, ba)
            write_stream(sb, bb)
            assert ba.getvalue() == bb.getvalue()
            assert spa == spb

    def test_different_seeds_differ(self):
        cfg = SynthConfig(class_count=3, d_emb=8, n_streams=2)
        a = synth_dataset(cfg, seed=1)[0][0]
        b = synth_dataset(cfg, seed=2)[0][0]
        assert not np.array_equal(a.values, b.values)

    def test_zero_noise_spans_follow_prototype(self):
        # short-only spans over 2 classes across 30 streams force a
        # (class, length) collision; with zero noise those spans must match.
        cfg = SynthConfig(
            class_count=2, d_emb=6, n_streams=30, noise_sigma=0.0, scale_mix=(1.0, 0.0, 0.0)
        )
        data = synth_dataset(cfg, seed=3)
        seen = {}
        collisions = 0
        for stream, spans in data:
            (span,) = spans
            block = stream.values[span.start_frame : span.end_frame + 1]
            key = (span.class_id, span.length)
            if key in seen:
                collisions += 1
                np.testing.assert_array_equal(block, seen[key])
            else:
                seen[key] = block
        assert collisions > 0

    def test_spans_within_bounds_exhaustive(self):
        cfg = SynthConfig(class_count=4, d_emb=8, n_streams=12, spans_per_stream=2)
        for stream, spans in synth_dataset(cfg, seed=11):
            for sp in spans:
                assert 0 <= sp.start_frame <= sp.end_frame < stream.frame_count
                lo, hi = SCALE_REGIMES[sp.scale_class]
                assert lo <= sp.length <= hi
                # labels actually mark the span frames
                for t in range(sp.start_frame, sp.end_frame + 1):
                    assert stream.labels[t] == sp.class_id

    def test_multi_label_background_empty(self):
        cfg = SynthConfig(class_count=3, d_emb=8, n_streams=3, label_arity="multi")
        for stream, spans in synth_dataset(cfg, seed=5):
            covered = set()
            for sp in spans:
                covered.update(range(sp.start_frame, sp.end_frame + 1))
            for t in range(stream.frame_count):
                if t not in covered:
                    assert stream.labels[t] == frozenset()

    def test_multi_label_spans_can_overlap_with_union_labels(self):
        cfg = SynthConfig(
            class_count=4, d_emb=8, n_streams=20, label_arity="multi", spans_per_stream=3
        )
        overlaps = 0
        for stream, spans in synth_dataset(cfg, seed=5):
            for i, a in enumerate(spans):
                for b in spans[i + 1 :]:
                    overlaps += a.start_frame <= b.end_frame and b.start_frame <= a.end_frame
            for t in range(stream.frame_count):
                expect = {sp.class_id for sp in spans if sp.start_frame <= t <= sp.end_frame}
                assert stream.labels[t] == frozenset(expect)
        assert overlaps > 0

    def test_degenerate_config_rejected(self):
        with pytest.raises(InvalidConfigError):
            SynthConfig(class_count=0, d_emb=8, n_streams=1)


# ---------------------------------------------------------------------------
# concatenation


class TestConcat:
    def test_identity_on_one_stream(self):
        s = make_stream([[1, 2], [3, 4]], (0, 1))
        merged, spans = concat_streams([s])
        assert merged == s
        assert spans == []

    def test_offsets(self):
        rng = np.random.default_rng(0)
        a = make_stream(rng.normal(size=(10, 3)), tuple([0] * 10))
        b = make_stream(rng.normal(size=(10, 3)), tuple([1] * 10))
        span = ActivitySpan(class_id=1, start_frame=3, end_frame=7, scale_class="short")
        merged, spans = concat_streams([a, b], [[], [span]])
        assert merged.frame_count == 20
        assert spans[0].start_frame == 13
        assert spans[0].end_frame == 17

    def test_matches_append_oracle(self):
        rng = np.random.default_rng(1)
        streams = [
            make_stream(rng.normal(size=(n, 4)), tuple(int(c) for c in rng.integers(0, 4, n)))
            for n in (3, 5, 2)
        ]
        merged, _ = concat_streams(streams)
        offset = 0
        for s in streams:
            for i in range(s.frame_count):
                np.testing.assert_array_equal(merged.values[offset + i], s.values[i])
                assert merged.labels[offset + i] == s.labels[i]
            offset += s.frame_count

    def test_associative(self):
        rng = np.random.default_rng(2)
        a, b, c = [
            make_stream(rng.normal(size=(n, 3)), tuple(int(x) for x in rng.integers(0, 4, n)))
            for n in (2, 3, 4)
        ]
        left, _ = concat_streams([concat_streams([a, b])[0], c])
        right, _ = concat_streams([a, concat_streams([b, c])[0]])
        assert left == right

    def test_dimension_mismatch(self):
        a = make_stream([[1, 2]], (0,))
        b = make_stream([[1, 2, 3]], (0,))
        with pytest.raises(InvalidInputError):
            concat_streams([a, b])
