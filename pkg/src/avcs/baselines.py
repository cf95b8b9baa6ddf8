"""Reference temporal modules behind the same pipeline interface.

Four alternatives to the selective recurrence: a fixed-matrix recurrence
(optionally tanh-activated), a gated recurrence (forget/input/output gates),
a 1-D conv + adaptive max pool over a trailing window, and single-head
scaled dot-product attention over a trailing window with last-position
readout.

Recurrent baselines cost O(1) per frame; windowed ones recompute their
window every frame, costing O(m) (conv) or O(m * d) (attention readout);
feeding the whole prefix as the window makes the per-step cost grow with
the stream, which the bench harness measures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, InvalidInputError
from .mathutil import sigmoid
from .stream import _frozen

ACTIVATIONS = {
    "identity": lambda z: z,
    "tanh": np.tanh,
}


@dataclass(frozen=True, eq=False)
class FixedRecurrenceParams:
    """s_t = phi_h(A s_{t-1} + B x_t + b_h); y_t = phi_o(C s_t + b_o)."""

    a: np.ndarray  # (d, d)
    b: np.ndarray  # (d, d_tok)
    c: np.ndarray  # (d_out, d)
    b_h: np.ndarray  # (d,)
    b_o: np.ndarray  # (d_out,)
    phi_h: str = "tanh"
    phi_o: str = "identity"

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        c = np.asarray(self.c, dtype=np.float64)
        b_h = np.asarray(self.b_h, dtype=np.float64)
        b_o = np.asarray(self.b_o, dtype=np.float64)
        d = a.shape[0]
        if a.shape != (d, d) or b.shape[0] != d or c.shape[1] != d:
            raise InvalidInputError("inconsistent recurrence shapes")
        if b_h.shape != (d,) or b_o.shape != (c.shape[0],):
            raise InvalidInputError("inconsistent bias shapes")
        if self.phi_h not in ACTIVATIONS or self.phi_o not in ACTIVATIONS:
            raise InvalidConfigError(f"unknown activation {self.phi_h!r}/{self.phi_o!r}")
        for name, arr in zip(("a", "b", "c", "b_h", "b_o"), (a, b, c, b_h, b_o)):
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError("recurrence parameters contain non-finite entries")
            object.__setattr__(self, name, _frozen(arr))

    @property
    def d(self) -> int:
        return self.a.shape[0]

    @property
    def d_tok(self) -> int:
        return self.b.shape[1]

    @property
    def d_out(self) -> int:
        return self.c.shape[0]


def fixed_recurrence_step(state: np.ndarray, x: np.ndarray, p: FixedRecurrenceParams):
    phi_h = ACTIVATIONS[p.phi_h]
    phi_o = ACTIVATIONS[p.phi_o]
    s = phi_h(p.a @ state + p.b @ x + p.b_h)
    y = phi_o(p.c @ s + p.b_o)
    return y, s


def fixed_recurrence_scan(tokens: np.ndarray, s0: np.ndarray, p: FixedRecurrenceParams):
    tokens = np.asarray(tokens, dtype=np.float64)
    ys = np.empty((tokens.shape[0], p.d_out))
    s = np.asarray(s0, dtype=np.float64)
    for t in range(tokens.shape[0]):
        ys[t], s = fixed_recurrence_step(s, tokens[t], p)
    return ys, s


@dataclass(frozen=True, eq=False)
class GatedRecurrenceParams:
    """Forget/input/candidate/output-gated cell with hidden width h = d_tok.

    Gate pre-activations stack in (i, f, g, o) order along the first axis.
    """

    w_x: np.ndarray  # (4h, d_tok)
    w_h: np.ndarray  # (4h, h)
    bias: np.ndarray  # (4h,)

    def __post_init__(self):
        w_x = np.asarray(self.w_x, dtype=np.float64)
        w_h = np.asarray(self.w_h, dtype=np.float64)
        bias = np.asarray(self.bias, dtype=np.float64)
        h = w_h.shape[1]
        if w_x.shape[0] != 4 * h or w_h.shape != (4 * h, h) or bias.shape != (4 * h,):
            raise InvalidInputError("inconsistent gated-cell shapes")
        for name, arr in zip(("w_x", "w_h", "bias"), (w_x, w_h, bias)):
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError("gated-cell parameters contain non-finite entries")
            object.__setattr__(self, name, _frozen(arr))

    @property
    def hidden(self) -> int:
        return self.w_h.shape[1]

    @property
    def d_tok(self) -> int:
        return self.w_x.shape[1]


def gated_recurrence_step(state, x: np.ndarray, p: GatedRecurrenceParams):
    """One gated update; state is the (h, c) pair."""
    h_prev, c_prev = state
    z = p.w_x @ x + p.w_h @ h_prev + p.bias
    hd = p.hidden
    i = sigmoid(z[:hd])
    f = sigmoid(z[hd : 2 * hd])
    g = np.tanh(z[2 * hd : 3 * hd])
    o = sigmoid(z[3 * hd :])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, (h, c)


def gated_recurrence_scan(tokens: np.ndarray, state, p: GatedRecurrenceParams):
    tokens = np.asarray(tokens, dtype=np.float64)
    ys = np.empty((tokens.shape[0], p.hidden))
    for t in range(tokens.shape[0]):
        ys[t], state = gated_recurrence_step(state, tokens[t], p)
    return ys, state


@dataclass(frozen=True, eq=False)
class ConvPoolParams:
    """1-D convolution (kernel 3, valid) + adaptive max pooling over time."""

    kernel: np.ndarray  # (3, d_tok, d_tok): taps for offsets -1, 0, +1
    bias: np.ndarray  # (d_tok,)

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if k.ndim != 3 or k.shape[0] != 3 or k.shape[1] != k.shape[2]:
            raise InvalidInputError("conv kernel must be (3, d_tok, d_tok)")
        if b.shape != (k.shape[1],):
            raise InvalidInputError("conv bias shape mismatch")
        if not (np.all(np.isfinite(k)) and np.all(np.isfinite(b))):
            raise InvalidInputError("conv parameters contain non-finite entries")
        object.__setattr__(self, "kernel", _frozen(k))
        object.__setattr__(self, "bias", _frozen(b))

    @property
    def d_tok(self) -> int:
        return self.kernel.shape[1]


def conv_responses(window: np.ndarray, p: ConvPoolParams) -> np.ndarray:
    """Valid conv responses over a (m, d_tok) window; windows shorter than the
    kernel are zero-padded on the left up to length 3."""
    w = np.asarray(window, dtype=np.float64)
    if w.ndim != 2 or w.shape[1] != p.d_tok:
        raise InvalidInputError(f"window must be (m, {p.d_tok})")
    if w.shape[0] < 3:
        w = np.concatenate([np.zeros((3 - w.shape[0], p.d_tok)), w], axis=0)
    m = w.shape[0]
    out = (
        w[: m - 2] @ p.kernel[0].T
        + w[1 : m - 1] @ p.kernel[1].T
        + w[2:] @ p.kernel[2].T
        + p.bias
    )
    return out


def conv_pool_forward(window: np.ndarray, p: ConvPoolParams) -> np.ndarray:
    """Max over time of the conv responses: one (d_tok,) vector per window."""
    return np.max(conv_responses(window, p), axis=0)


@dataclass(frozen=True, eq=False)
class AttentionParams:
    """Single-head scaled dot-product attention projections (no output map)."""

    w_q: np.ndarray  # (d_tok, d_tok)
    w_k: np.ndarray  # (d_tok, d_tok)
    w_v: np.ndarray  # (d_tok, d_tok)

    def __post_init__(self):
        mats = []
        for name in ("w_q", "w_k", "w_v"):
            m = np.asarray(getattr(self, name), dtype=np.float64)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise InvalidInputError("attention projections must be square")
            if not np.all(np.isfinite(m)):
                raise InvalidInputError("attention parameters contain non-finite entries")
            mats.append(m)
        if not (mats[0].shape == mats[1].shape == mats[2].shape):
            raise InvalidInputError("attention projections must share one shape")
        for name, m in zip(("w_q", "w_k", "w_v"), mats):
            object.__setattr__(self, name, _frozen(m))

    @property
    def d_tok(self) -> int:
        return self.w_q.shape[0]


def attention_weights(window: np.ndarray, p: AttentionParams) -> np.ndarray:
    """Softmax attention of the last position over the whole window."""
    w = np.asarray(window, dtype=np.float64)
    if w.ndim != 2 or w.shape[1] != p.d_tok:
        raise InvalidInputError(f"window must be (m, {p.d_tok})")
    if w.shape[0] < 1:
        raise InvalidInputError("attention window must hold at least one token")
    q = p.w_q @ w[-1]
    scores = (w @ p.w_k.T) @ q / np.sqrt(p.d_tok)
    scores -= scores.max()
    e = np.exp(scores)
    return e / e.sum()


def window_attention_forward(window: np.ndarray, p: AttentionParams) -> np.ndarray:
    attn = attention_weights(window, p)
    values = np.asarray(window, dtype=np.float64) @ p.w_v.T
    return attn @ values


@dataclass(frozen=True)
class WindowConfig:
    """Trailing-window policy for the batch-style baselines."""

    m: int
    aggregation: str = "attention"  # "attention" | "conv_pool"

    def __post_init__(self):
        if self.m < 1:
            raise InvalidConfigError("window size must be >= 1")
        if self.aggregation not in ("attention", "conv_pool"):
            raise InvalidConfigError(f"unknown aggregation {self.aggregation!r}")
