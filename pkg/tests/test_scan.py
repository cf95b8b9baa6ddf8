import numpy as np
import pytest

from avcs import (
    ActivityToken,
    HiddenState,
    InvalidConfigError,
    SelectiveParams,
    TruncatedPayloadError,
    discretize,
    restore,
    scan_chunked,
    scan_sequential,
    snapshot,
    step,
    zero_state,
)
from avcs.baselines import FixedRecurrenceParams, fixed_recurrence_scan


def scalar_params(**kw):
    base = dict(
        a_log=[0.0],  # A = -1
        w_delta=[0.0],
        b_delta=0.0,  # softplus(0) = ln 2
        w_b=[[1.0]],
        w_c=[[1.0]],
        d_skip=[0.0],
    )
    base.update(kw)
    return SelectiveParams(**base)


def random_params(rng, d_tok, d_state):
    return SelectiveParams(
        a_log=rng.normal(size=d_state),
        w_delta=rng.normal(size=d_tok) * 0.5,
        b_delta=float(rng.normal()),
        w_b=rng.normal(size=(d_state, d_tok)),
        w_c=rng.normal(size=(d_state, d_tok)),
        d_skip=rng.normal(size=d_tok),
    )


def rel_err(a, b):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-12)
    return np.max(np.abs(a - b) / denom)


class TestDiscretize:
    def test_half_life_hand_case(self):
        a_bar, b_bar, c, delta = discretize(np.array([0.0]), scalar_params())
        assert delta == pytest.approx(np.log(2.0), rel=1e-12)
        assert a_bar[0] == pytest.approx(0.5, rel=1e-12)

    def test_zero_token_no_write_no_read(self):
        rng = np.random.default_rng(0)
        p = random_params(rng, 4, 3)
        a_bar, b_bar, c, delta = discretize(np.zeros(4), p)
        assert not b_bar.any() and not c.any()
        assert delta > 0

    def test_small_delta_preserves_state(self):
        p = scalar_params(b_delta=-40.0)  # softplus(-40) ~ 4e-18
        a_bar, *_ = discretize(np.array([0.0]), p)
        assert a_bar[0] == pytest.approx(1.0, abs=1e-12)

    def test_decay_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(1)
        p = random_params(rng, 5, 4)
        for _ in range(20):
            a_bar, *_ = discretize(rng.uniform(0, 3, size=5), p)
            assert np.all(a_bar > 0) and np.all(a_bar < 1)


class TestStep:
    def test_two_step_hand_recurrence(self):
        p = scalar_params()
        s0 = zero_state(1, 1)
        out1 = step(s0, np.array([1.0]), p)
        assert out1.y[0] == pytest.approx(0.6931, abs=1e-4)
        out2 = step(out1.new_state, np.array([1.0]), p)
        assert out2.new_state.s[0, 0] == pytest.approx(0.5 * 0.6931 + 0.6931, abs=1e-4)
        assert out2.y[0] == pytest.approx(1.0397, abs=1e-4)

    def test_zero_input_decays_only(self):
        rng = np.random.default_rng(2)
        p = random_params(rng, 3, 2)
        state = HiddenState(rng.normal(size=(3, 2)))
        out = step(state, np.zeros(3), p)
        assert np.all(np.abs(out.y) == 0)
        a_bar, *_ = discretize(np.zeros(3), p)
        np.testing.assert_allclose(out.new_state.s, state.s * a_bar, rtol=1e-15)

    def test_from_zero_state_single_step(self):
        rng = np.random.default_rng(3)
        p = random_params(rng, 3, 2)
        x = rng.uniform(0, 1, size=3)
        out = step(zero_state(3, 2), x, p)
        a_bar, b_bar, c, _ = discretize(x, p)
        np.testing.assert_allclose(out.new_state.s, np.outer(x, b_bar), rtol=1e-14)

    def test_token_frame_index_propagates(self):
        p = scalar_params()
        out = step(zero_state(1, 1), ActivityToken([1.0], frame_index=41), p)
        assert out.new_state.last_frame_index == 41


class TestScans:
    def test_sequential_equals_step_fold(self):
        rng = np.random.default_rng(4)
        p = random_params(rng, 4, 3)
        tokens = rng.uniform(0, 1, size=(17, 4))
        ys, final = scan_sequential(tokens, zero_state(4, 3), p)
        state = zero_state(4, 3)
        for t in range(17):
            out = step(state, tokens[t], p)
            np.testing.assert_allclose(out.y, ys[t], rtol=1e-13, atol=1e-15)
            state = out.new_state
        np.testing.assert_allclose(final.s, state.s, rtol=1e-13, atol=1e-15)

    def test_chunked_matches_sequential_257(self):
        rng = np.random.default_rng(5)
        p = random_params(rng, 4, 3)
        tokens = rng.uniform(0, 1, size=(257, 4))
        s0 = HiddenState(rng.normal(size=(4, 3)))
        ys_seq, fin_seq = scan_sequential(tokens, s0, p)
        ys_ch, fin_ch = scan_chunked(tokens, s0, p, chunk_len=16)
        assert rel_err(ys_ch, ys_seq) < 1e-10
        assert rel_err(fin_ch.s, fin_seq.s) < 1e-10

    def test_single_chunk_covers_whole_sequence(self):
        rng = np.random.default_rng(6)
        p = random_params(rng, 3, 2)
        tokens = rng.uniform(0, 1, size=(9, 3))
        a, fa = scan_chunked(tokens, zero_state(3, 2), p, chunk_len=9)
        b, fb = scan_chunked(tokens, zero_state(3, 2), p, chunk_len=100)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(fa.s, fb.s)

    def test_empty_sequence(self):
        p = scalar_params()
        s0 = HiddenState(np.array([[3.0]]), last_frame_index=9)
        ys, final = scan_chunked(np.zeros((0, 1)), s0, p, chunk_len=4)
        assert ys.shape == (0, 1)
        np.testing.assert_array_equal(final.s, s0.s)
        assert final.last_frame_index == 9

    def test_zero_chunk_len_rejected(self):
        with pytest.raises(InvalidConfigError):
            scan_chunked(np.zeros((3, 1)), zero_state(1, 1), scalar_params(), chunk_len=0)

    def test_state_affinity_superposition(self):
        rng = np.random.default_rng(7)
        p = random_params(rng, 3, 2)
        tokens = rng.uniform(0, 1, size=(12, 3))

        def final(s0):
            return scan_sequential(tokens, HiddenState(s0), p)[1].s

        zero = final(np.zeros((3, 2)))
        s_a = rng.normal(size=(3, 2))
        s_b = rng.normal(size=(3, 2))
        lhs = final(2.5 * s_a - 1.5 * s_b) - zero
        rhs = 2.5 * (final(s_a) - zero) - 1.5 * (final(s_b) - zero)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-12)

    def test_zero_input_state_norm_non_increasing(self):
        rng = np.random.default_rng(8)
        p = random_params(rng, 3, 2)
        state = HiddenState(rng.normal(size=(3, 2)))
        norms = [np.linalg.norm(state.s)]
        for _ in range(10):
            state = step(state, np.zeros(3), p).new_state
            norms.append(np.linalg.norm(state.s))
        assert all(b <= a for a, b in zip(norms, norms[1:]))


class TestDegenerateReduction:
    def test_matches_fixed_recurrence(self):
        # constant generators: token channel 0 pinned to 1 makes w_b/w_c
        # rank-one maps produce input-independent B and C
        rng = np.random.default_rng(9)
        d_tok, d_state, n = 3, 4, 25
        b0 = rng.normal(size=d_state)
        c0 = rng.normal(size=d_state)
        delta = float(np.logaddexp(0.0, 0.6))
        p = SelectiveParams(
            a_log=rng.normal(size=d_state),
            w_delta=np.zeros(d_tok),
            b_delta=0.6,
            w_b=np.outer(b0, np.eye(d_tok)[0]),
            w_c=np.outer(c0, np.eye(d_tok)[0]),
            d_skip=np.zeros(d_tok),
        )
        tokens = rng.uniform(0, 1, size=(n, d_tok))
        tokens[:, 0] = 1.0
        ys, _ = scan_sequential(tokens, zero_state(d_tok, d_state), p)

        # equivalent dense fixed recurrence on the flattened (d_tok*d_state) state
        a_bar = np.exp(delta * (-np.exp(p.a_log)))
        d = d_tok * d_state
        a_mat = np.diag(np.tile(a_bar, d_tok))
        b_mat = np.zeros((d, d_tok))
        c_mat = np.zeros((d_tok, d))
        for j in range(d_tok):
            b_mat[j * d_state : (j + 1) * d_state, j] = delta * b0
            c_mat[j, j * d_state : (j + 1) * d_state] = c0
        fixed = FixedRecurrenceParams(
            a=a_mat, b=b_mat, c=c_mat, b_h=np.zeros(d), b_o=np.zeros(d_tok),
            phi_h="identity", phi_o="identity",
        )
        ys_fixed, _ = fixed_recurrence_scan(tokens, np.zeros(d), fixed)
        np.testing.assert_allclose(ys, ys_fixed, rtol=0, atol=1e-12)


class TestSnapshot:
    def test_zero_state_round_trip(self):
        s = zero_state(3, 2)
        back = restore(snapshot(s))
        np.testing.assert_array_equal(back.s, s.s)
        assert back.last_frame_index == -1

    def test_random_state_round_trip(self):
        rng = np.random.default_rng(10)
        s = HiddenState(rng.normal(size=(4, 5)), last_frame_index=123)
        blob = snapshot(s)
        back = restore(blob)
        assert back.s.tobytes() == s.s.tobytes()
        assert back.last_frame_index == 123

    def test_tampered_length(self):
        blob = snapshot(zero_state(2, 2))
        with pytest.raises(TruncatedPayloadError):
            restore(blob[:-1])
        with pytest.raises(TruncatedPayloadError):
            restore(blob + b"\x00")
