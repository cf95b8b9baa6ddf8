import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avcs import (
    BadMagicError,
    InvalidConfigError,
    ModelConfig,
    TruncatedPayloadError,
    decode,
    forward_frame,
    forward_sequence,
    init_model,
    load_model,
    save_model,
    start_session,
)
from avcs.mathutil import sigmoid

KINDS = ["selective", "rnn", "lstm", "convpool", "attn"]


def small_config(**kw):
    base = dict(d_emb=12, d_tok=4, d_state=3, class_count=5, seed=3)
    base.update(kw)
    return ModelConfig(**base)


class TestInit:
    def test_same_seed_identical(self):
        a = init_model(small_config())
        b = init_model(small_config())
        for (ka, va), (kb, vb) in zip(a.param_items(), b.param_items()):
            assert ka == kb
            np.testing.assert_array_equal(va, vb)

    def test_different_seeds_differ(self):
        a = init_model(small_config(seed=1))
        b = init_model(small_config(seed=2))
        assert not np.array_equal(a.funnel.weight, b.funnel.weight)

    def test_dims_propagate(self):
        m = init_model(small_config())
        assert m.funnel.weight.shape == (4, 12)
        assert m.ssm.w_b.shape == (3, 4)
        assert m.head_weight.shape == (5, 4)

    def test_default_d_tok_is_quarter(self):
        cfg = ModelConfig(d_emb=64, class_count=3)
        assert cfg.d_tok == 16

    def test_decay_spectrum_spans_configured_range(self):
        m = init_model(small_config())
        a = -np.exp(m.ssm.a_log)
        assert a.min() == pytest.approx(-1.0)
        assert a.max() == pytest.approx(-1e-2)

    def test_bad_config_rejected(self):
        with pytest.raises(InvalidConfigError):
            ModelConfig(d_emb=8, d_tok=8, class_count=3)
        with pytest.raises(InvalidConfigError):
            ModelConfig(d_emb=8, class_count=1)
        with pytest.raises(InvalidConfigError):
            init_model(small_config(), temporal="transformer")


class TestStreamingSequenceEquivalence:
    @pytest.mark.parametrize("kind", KINDS)
    def test_frame_by_frame_matches_sequence(self, kind):
        rng = np.random.default_rng(5)
        model = init_model(small_config(), temporal=kind, window_m=6)
        embs = rng.normal(size=(33, 12))
        seq = forward_sequence(model, embs)
        session = start_session(model)
        for t in range(33):
            rec = forward_frame(session, embs[t])
            assert rec.frame_index == seq[t].frame_index == t
            denom = np.maximum(np.abs(seq[t].logits), 1e-12)
            assert np.max(np.abs(rec.logits - seq[t].logits) / denom) < 1e-10
            assert rec.decoded == seq[t].decoded
        assert session.frames_seen == 33

    @pytest.mark.parametrize("kind", KINDS)
    def test_zero_frames_yield_empty_records(self, kind):
        model = init_model(small_config(), temporal=kind)
        assert forward_sequence(model, np.zeros((0, 12))) == []

    def test_identical_sessions_identical_records(self):
        rng = np.random.default_rng(6)
        model = init_model(small_config())
        embs = rng.normal(size=(10, 12))
        s1, s2 = start_session(model), start_session(model)
        for t in range(10):
            r1 = forward_frame(s1, embs[t])
            r2 = forward_frame(s2, embs[t])
            np.testing.assert_array_equal(r1.logits, r2.logits)

    def test_zero_embedding_zero_biases_zero_logits(self):
        model = init_model(small_config())
        vals = model.param_dict()
        vals["funnel.bias"] = np.zeros_like(vals["funnel.bias"])
        vals["head.bias"] = np.zeros_like(vals["head.bias"])
        model = model.with_params(vals)
        rec = forward_frame(start_session(model), np.zeros(12))
        np.testing.assert_array_equal(rec.logits, np.zeros(5))

    def test_state_size_constant(self):
        model = init_model(small_config())
        session = start_session(model)
        rng = np.random.default_rng(7)
        shapes = set()
        for t in range(50):
            forward_frame(session, rng.normal(size=12))
            shapes.add(session.state.s.shape)
        assert shapes == {(4, 3)}

    @pytest.mark.parametrize("kind", ["convpool", "attn"])
    def test_windowed_session_buffer_capped(self, kind):
        model = init_model(small_config(), temporal=kind, window_m=6)
        session = start_session(model)
        rng = np.random.default_rng(8)
        for t in range(30):
            forward_frame(session, rng.normal(size=12))
            assert len(session.state) == min(t + 1, 6)

    def test_concurrent_sessions_share_one_model(self):
        import threading

        model = init_model(small_config())
        rng = np.random.default_rng(9)
        inputs = [rng.normal(size=(40, 12)) for _ in range(4)]
        serial = [
            [forward_frame(s, e).logits for e in embs]
            for embs, s in ((embs, start_session(model)) for embs in inputs)
        ]
        results = [None] * 4

        def worker(i):
            session = start_session(model)
            results[i] = [forward_frame(session, e).logits for e in inputs[i]]

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        for i in range(4):
            for a, b in zip(serial[i], results[i]):
                np.testing.assert_array_equal(a, b)


class TestDecode:
    def test_single_label_tie_to_lowest_id(self):
        assert decode(np.array([0.2, 0.9, 0.9]), "single") == frozenset([1])

    def test_multi_all_very_negative_is_empty(self):
        assert decode(np.full(4, -1e9), "multi") == frozenset()

    def test_single_decodes_exactly_one(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            assert len(decode(rng.normal(size=6), "single")) == 1

    @given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
    @settings(max_examples=30, deadline=None)
    def test_multi_matches_threshold_oracle(self, seed, thr):
        rng = np.random.default_rng(seed)
        logits = rng.normal(size=7) * 3
        got = decode(logits, "multi", thr)
        expected = frozenset(c for c in range(7) if sigmoid(logits[c]) > thr)
        assert got == expected

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
    @settings(max_examples=30, deadline=None)
    def test_single_scale_covariant(self, seed, alpha):
        rng = np.random.default_rng(seed)
        logits = rng.normal(size=5)
        assert decode(logits, "single") == decode(alpha * logits, "single")


class TestCheckpoint:
    @pytest.mark.parametrize("kind", KINDS)
    def test_round_trip_bit_exact(self, kind, tmp_path):
        model = init_model(small_config(), temporal=kind, window_m=9)
        path = tmp_path / "model.avcm"
        save_model(model, path)
        back = load_model(path)
        assert back.core.kind == kind
        assert back.config == model.config
        for (ka, va), (kb, vb) in zip(model.param_items(), back.param_items()):
            assert ka == kb
            assert va.tobytes() == vb.tobytes()
        if kind in ("convpool", "attn"):
            assert back.core.m == 9

    def test_rnn_activations_preserved(self, tmp_path):
        model = init_model(small_config(), temporal="rnn")
        save_model(model, tmp_path / "m.avcm")
        back = load_model(tmp_path / "m.avcm")
        assert back.core.params.phi_h == "tanh"
        assert back.core.params.phi_o == "identity"

    def test_bad_magic(self):
        model = init_model(small_config())
        buf = io.BytesIO()
        save_model(model, buf)
        blob = bytearray(buf.getvalue())
        blob[:4] = b"NOPE"
        with pytest.raises(BadMagicError):
            load_model(bytes(blob))

    def test_truncation(self):
        model = init_model(small_config())
        buf = io.BytesIO()
        save_model(model, buf)
        with pytest.raises(TruncatedPayloadError):
            load_model(buf.getvalue()[:-8])
