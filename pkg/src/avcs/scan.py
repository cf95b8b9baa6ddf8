"""Input-dependent (selective) state recurrence.

Per frame t with token x_t (d_tok,):

    delta_t = softplus(w_delta . x_t + b_delta)          scalar step size
    a_bar_t = exp(delta_t * A)          A = -exp(a_log)  (d_state,) in (0,1)
    b_bar_t = delta_t * (w_b @ x_t)                      (d_state,)
    c_t     = w_c @ x_t                                  (d_state,)
    S_t[j]  = a_bar_t * S_{t-1}[j] + b_bar_t * x_t[j]    per token channel j
    y_t[j]  = c_t . S_t[j] + d_skip[j] * x_t[j]

The state S is a (d_tok, d_state) matrix of fixed size, so per-frame cost and
memory are constant in the frame index. `scan_sequential` folds `step`;
`scan_chunked` evaluates the same recurrence chunk-parallel via cumulative
log-decay sums and must agree with the sequential path to float64 precision.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, NumericError, TruncatedPayloadError
from .funnel import ActivityToken
from .stream import _frozen


@dataclass(frozen=True, eq=False)
class SelectiveParams:
    """Generators of the per-input recurrence matrices.

    a_log: (d_state,) with A = -exp(a_log) strictly negative.
    w_delta: (d_tok,), b_delta: scalar  -> step-size generator.
    w_b, w_c: (d_state, d_tok)          -> input/output generators.
    d_skip: (d_tok,)                    -> direct feedthrough.
    """

    a_log: np.ndarray
    w_delta: np.ndarray
    b_delta: float
    w_b: np.ndarray
    w_c: np.ndarray
    d_skip: np.ndarray

    def __post_init__(self):
        a_log = np.asarray(self.a_log, dtype=np.float64)
        w_delta = np.asarray(self.w_delta, dtype=np.float64)
        w_b = np.asarray(self.w_b, dtype=np.float64)
        w_c = np.asarray(self.w_c, dtype=np.float64)
        d_skip = np.asarray(self.d_skip, dtype=np.float64)
        d_state, d_tok = w_b.shape
        if a_log.shape != (d_state,) or w_c.shape != (d_state, d_tok):
            raise InvalidInputError("inconsistent generator shapes")
        if w_delta.shape != (d_tok,) or d_skip.shape != (d_tok,):
            raise InvalidInputError("inconsistent generator shapes")
        arrays = (a_log, w_delta, w_b, w_c, d_skip)
        if not all(np.all(np.isfinite(a)) for a in arrays) or not np.isfinite(self.b_delta):
            raise InvalidInputError("selective parameters contain non-finite entries")
        for name, a in zip(("a_log", "w_delta", "w_b", "w_c", "d_skip"), arrays):
            object.__setattr__(self, name, _frozen(a))
        object.__setattr__(self, "b_delta", float(self.b_delta))

    @property
    def d_state(self) -> int:
        return self.w_b.shape[0]

    @property
    def d_tok(self) -> int:
        return self.w_b.shape[1]

    @property
    def a_diag(self) -> np.ndarray:
        """The strictly negative diagonal of the continuous-time state matrix."""
        return -np.exp(self.a_log)


@dataclass
class HiddenState:
    """Fixed-size recurrent memory: (d_tok, d_state) float64 matrix.

    Owned by exactly one stream session; mutate only through that session.
    """

    s: np.ndarray
    last_frame_index: int = -1

    def __post_init__(self):
        s = np.asarray(self.s, dtype=np.float64)
        if s.ndim != 2:
            raise InvalidInputError(f"state must be (d_tok, d_state), got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise NumericError("state contains non-finite entries")
        self.s = s

    @property
    def d_tok(self) -> int:
        return self.s.shape[0]

    @property
    def d_state(self) -> int:
        return self.s.shape[1]

    def copy(self) -> "HiddenState":
        return HiddenState(self.s.copy(), self.last_frame_index)


def zero_state(d_tok: int, d_state: int) -> HiddenState:
    return HiddenState(np.zeros((d_tok, d_state)), last_frame_index=-1)


@dataclass(frozen=True, eq=False)
class StepOutput:
    y: np.ndarray
    new_state: HiddenState


def _token_values(x_t) -> np.ndarray:
    v = x_t.values if isinstance(x_t, ActivityToken) else np.asarray(x_t, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise NumericError("non-finite token input")
    return v


def softplus(z):
    """log(1 + exp(z)) in overflow-safe form (-> z for large z)."""
    return np.logaddexp(0.0, z)


def discretize(x_t, p: SelectiveParams):
    """Per-input recurrence coefficients: (a_bar, b_bar, c, delta)."""
    x = _token_values(x_t)
    if x.shape != (p.d_tok,):
        raise InvalidInputError(f"token must be ({p.d_tok},), got {x.shape}")
    delta = float(softplus(p.w_delta @ x + p.b_delta))
    a_bar = np.exp(delta * p.a_diag)
    b_bar = delta * (p.w_b @ x)
    c = p.w_c @ x
    return a_bar, b_bar, c, delta


def step(state: HiddenState, x_t, p: SelectiveParams) -> StepOutput:
    """Advance the recurrence by one frame in O(d_tok * d_state) time and memory."""
    x = _token_values(x_t)
    if state.s.shape != (p.d_tok, p.d_state):
        raise InvalidInputError(
            f"state shape {state.s.shape} does not match params ({p.d_tok}, {p.d_state})"
        )
    a_bar, b_bar, c, _ = discretize(x, p)
    s_new = state.s * a_bar + np.outer(x, b_bar)
    y = s_new @ c + p.d_skip * x
    if not (np.all(np.isfinite(s_new)) and np.all(np.isfinite(y))):
        raise NumericError("non-finite state update")
    frame = x_t.frame_index if isinstance(x_t, ActivityToken) else state.last_frame_index + 1
    return StepOutput(y=y, new_state=HiddenState(s_new, frame))


def _token_matrix(tokens, d_tok: int) -> np.ndarray:
    if isinstance(tokens, np.ndarray):
        mat = np.asarray(tokens, dtype=np.float64)
        mat = mat.reshape(0, d_tok) if mat.size == 0 else mat
    else:
        toks = list(tokens)
        mat = (
            np.stack([_token_values(t) for t in toks])
            if toks
            else np.zeros((0, d_tok))
        )
    if mat.ndim != 2 or mat.shape[1] != d_tok:
        raise InvalidInputError(f"tokens must be (n, {d_tok}), got {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise NumericError("non-finite token input")
    return mat


def _coefficients(x: np.ndarray, p: SelectiveParams):
    """Vectorized discretize over a (n, d_tok) token matrix."""
    delta = softplus(x @ p.w_delta + p.b_delta)  # (n,)
    log_decay = delta[:, None] * p.a_diag[None, :]  # (n, d_state)
    b_bar = delta[:, None] * (x @ p.w_b.T)  # (n, d_state)
    c = x @ p.w_c.T  # (n, d_state)
    return log_decay, b_bar, c


def scan_sequential(tokens, s0: HiddenState, p: SelectiveParams):
    """Left-to-right fold of `step` over the token sequence.

    Returns (ys, final_state) with ys shaped (n, d_tok). Accepts either a
    (n, d_tok) array or a sequence of ActivityToken.
    """
    x = _token_matrix(tokens, p.d_tok)
    if s0.s.shape != (p.d_tok, p.d_state):
        raise InvalidInputError("initial state shape does not match params")
    n = x.shape[0]
    log_decay, b_bar, c = _coefficients(x, p)
    a_bar = np.exp(log_decay)
    ys = np.empty((n, p.d_tok))
    s = s0.s.copy()
    for t in range(n):
        s *= a_bar[t]
        s += x[t][:, None] * b_bar[t]
        ys[t] = s @ c[t] + p.d_skip * x[t]
    if n and not np.all(np.isfinite(ys)):
        raise NumericError("non-finite scan output")
    return ys, HiddenState(s, s0.last_frame_index + n)


def scan_chunked(tokens, s0: HiddenState, p: SelectiveParams, chunk_len: int):
    """Chunk-parallel evaluation of the same recurrence.

    Within each chunk the per-step decay products are expressed through
    cumulative sums of log-decays, the chunk's input contributions are formed
    with one einsum over the (t >= u) decay-weight matrix, and chunk boundary
    states are stitched sequentially.
    """
    if chunk_len < 1:
        raise InvalidConfigError(f"chunk_len must be >= 1, got {chunk_len}")
    x = _token_matrix(tokens, p.d_tok)
    if s0.s.shape != (p.d_tok, p.d_state):
        raise InvalidInputError("initial state shape does not match params")
    n = x.shape[0]
    if n == 0:
        return np.zeros((0, p.d_tok)), s0.copy()

    log_decay, b_bar, c = _coefficients(x, p)
    ys = np.empty((n, p.d_tok))
    s = s0.s
    for lo in range(0, n, chunk_len):
        hi = min(lo + chunk_len, n)
        xs = x[lo:hi]
        ld = log_decay[lo:hi]
        bb = b_bar[lo:hi]
        cs = c[lo:hi]
        m = hi - lo

        cum = np.cumsum(ld, axis=0)  # (m, d_state)
        # decay from just after step u to step t: exp(cum[t] - cum[u]), t >= u
        diff = cum[:, None, :] - cum[None, :, :]  # (m, m, d_state)
        mask = np.tril(np.ones((m, m)))[:, :, None]
        w = np.exp(np.where(mask > 0, diff, -np.inf))
        contrib = np.einsum("tuk,uj,uk->tjk", w, xs, bb)  # (m, d_tok, d_state)
        carried = np.exp(cum)[:, None, :] * s[None, :, :]
        states = carried + contrib
        ys[lo:hi] = np.einsum("tjk,tk->tj", states, cs) + xs * p.d_skip
        s = states[-1]
    if not np.all(np.isfinite(ys)):
        raise NumericError("non-finite scan output")
    return ys, HiddenState(s.copy(), s0.last_frame_index + n)


# ---------------------------------------------------------------------------
# state persistence

_SNAP_HEADER = struct.Struct("<IIq")  # d_tok, d_state, last_frame_index


def snapshot(state: HiddenState) -> bytes:
    """Serialize a hidden state: header then row-major little-endian f64."""
    return _SNAP_HEADER.pack(state.d_tok, state.d_state, state.last_frame_index) + state.s.astype(
        "<f8", copy=False
    ).tobytes()


def restore(blob: bytes) -> HiddenState:
    if len(blob) < _SNAP_HEADER.size:
        raise TruncatedPayloadError("state snapshot shorter than its header")
    d_tok, d_state, last = _SNAP_HEADER.unpack_from(blob)
    expected = _SNAP_HEADER.size + 8 * d_tok * d_state
    if len(blob) != expected:
        raise TruncatedPayloadError(
            f"state snapshot has {len(blob)} bytes, expected {expected}"
        )
    values = np.frombuffer(blob, dtype="<f8", offset=_SNAP_HEADER.size).reshape(d_tok, d_state)
    return HiddenState(values.copy(), last)
