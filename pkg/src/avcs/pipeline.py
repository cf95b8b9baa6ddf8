"""Model assembly: funnel -> temporal module -> linear classifier head.

Two evaluation modes share one set of parameters and must agree:

* streaming: a StreamSession consumes one frame at a time at O(1) cost,
  carrying context in the temporal module's fixed-size state;
* sequence: forward_sequence evaluates a whole embedding matrix at once
  (the selective module uses its chunk-parallel scan here).

The head is a plain linear map to class logits; sigmoid/softmax happen at
decode/loss time. Checkpoints round-trip bit-exactly through `.avcm` files.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from . import baselines as bl
from . import scan as ss
from .errors import (
    BadMagicError,
    InvalidConfigError,
    InvalidInputError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from .funnel import FunnelParams, funnel_forward_values
from .mathutil import sigmoid
from .stream import ARITY_MULTI, ARITY_SINGLE, EmbeddingStream, FrameEmbedding, _frozen

TEMPORAL_KINDS = ("selective", "rnn", "lstm", "convpool", "attn")
DEFAULT_WINDOW = 16
DEFAULT_CHUNK_LEN = 64


@dataclass(frozen=True)
class ModelConfig:
    d_emb: int
    class_count: int
    d_tok: int = 0  # 0 -> d_emb // 4
    d_state: int = 16
    label_arity: str = ARITY_SINGLE
    seed: int = 0

    def __post_init__(self):
        if self.d_tok == 0:
            object.__setattr__(self, "d_tok", max(1, self.d_emb // 4))
        if self.d_tok >= self.d_emb:
            raise InvalidConfigError(f"d_tok={self.d_tok} must be < d_emb={self.d_emb}")
        if self.class_count < 2:
            raise InvalidConfigError("class_count must be >= 2")
        if self.d_state < 1:
            raise InvalidConfigError("d_state must be >= 1")
        if self.label_arity not in (ARITY_SINGLE, ARITY_MULTI):
            raise InvalidConfigError(f"unknown label arity {self.label_arity!r}")


# ---------------------------------------------------------------------------
# temporal cores: one per module kind, sharing init_state/step/scan


class SelectiveCore:
    kind = "selective"

    def __init__(self, params: ss.SelectiveParams, chunk_len: int = DEFAULT_CHUNK_LEN):
        self.params = params
        self.chunk_len = chunk_len

    def init_state(self):
        return ss.zero_state(self.params.d_tok, self.params.d_state)

    def step(self, state, x):
        out = ss.step(state, x, self.params)
        return out.y, out.new_state

    def scan(self, tokens, state):
        return ss.scan_chunked(tokens, state, self.params, self.chunk_len)

    def param_items(self):
        p = self.params
        return [
            ("ssm.a_log", p.a_log),
            ("ssm.w_delta", p.w_delta),
            ("ssm.b_delta", np.array([p.b_delta])),
            ("ssm.w_b", p.w_b),
            ("ssm.w_c", p.w_c),
            ("ssm.d_skip", p.d_skip),
        ]

    def with_params(self, vals: dict):
        return SelectiveCore(
            ss.SelectiveParams(
                a_log=vals["ssm.a_log"],
                w_delta=vals["ssm.w_delta"],
                b_delta=float(vals["ssm.b_delta"][0]),
                w_b=vals["ssm.w_b"],
                w_c=vals["ssm.w_c"],
                d_skip=vals["ssm.d_skip"],
            ),
            self.chunk_len,
        )


class RnnCore:
    kind = "rnn"

    def __init__(self, params: bl.FixedRecurrenceParams):
        self.params = params

    def init_state(self):
        return np.zeros(self.params.d)

    def step(self, state, x):
        return bl.fixed_recurrence_step(state, x, self.params)

    def scan(self, tokens, state):
        return bl.fixed_recurrence_scan(tokens, state, self.params)

    def param_items(self):
        p = self.params
        return [
            ("rnn.a", p.a),
            ("rnn.b", p.b),
            ("rnn.c", p.c),
            ("rnn.b_h", p.b_h),
            ("rnn.b_o", p.b_o),
        ]

    def with_params(self, vals: dict):
        p = self.params
        return RnnCore(
            bl.FixedRecurrenceParams(
                a=vals["rnn.a"], b=vals["rnn.b"], c=vals["rnn.c"],
                b_h=vals["rnn.b_h"], b_o=vals["rnn.b_o"],
                phi_h=p.phi_h, phi_o=p.phi_o,
            )
        )


class LstmCore:
    kind = "lstm"

    def __init__(self, params: bl.GatedRecurrenceParams):
        self.params = params

    def init_state(self):
        h = self.params.hidden
        return (np.zeros(h), np.zeros(h))

    def step(self, state, x):
        return bl.gated_recurrence_step(state, x, self.params)

    def scan(self, tokens, state):
        return bl.gated_recurrence_scan(tokens, state, self.params)

    def param_items(self):
        p = self.params
        return [("lstm.w_x", p.w_x), ("lstm.w_h", p.w_h), ("lstm.bias", p.bias)]

    def with_params(self, vals: dict):
        return LstmCore(
            bl.GatedRecurrenceParams(
                w_x=vals["lstm.w_x"], w_h=vals["lstm.w_h"], bias=vals["lstm.bias"]
            )
        )


class _WindowedCore:
    """Common buffer plumbing for the window-based baselines.

    The per-session state is the trailing window of at most m tokens; every
    step recomputes the window aggregation from scratch.
    """

    def __init__(self, m: int):
        if m < 1:
            raise InvalidConfigError("window size must be >= 1")
        self.m = m

    def init_state(self):
        return []

    def step(self, state, x):
        state = state + [np.asarray(x, dtype=np.float64)]
        if len(state) > self.m:
            state = state[-self.m :]
        return self._aggregate(np.stack(state)), state

    def scan(self, tokens, state):
        tokens = np.asarray(tokens, dtype=np.float64)
        ys = np.empty_like(tokens)
        for t in range(tokens.shape[0]):
            ys[t], state = self.step(state, tokens[t])
        return ys, state


class ConvPoolCore(_WindowedCore):
    kind = "convpool"

    def __init__(self, params: bl.ConvPoolParams, m: int = DEFAULT_WINDOW):
        super().__init__(m)
        self.params = params

    def _aggregate(self, window):
        return bl.conv_pool_forward(window, self.params)

    def param_items(self):
        return [("conv.kernel", self.params.kernel), ("conv.bias", self.params.bias)]

    def with_params(self, vals: dict):
        return ConvPoolCore(
            bl.ConvPoolParams(kernel=vals["conv.kernel"], bias=vals["conv.bias"]), self.m
        )


class AttnCore(_WindowedCore):
    kind = "attn"

    def __init__(self, params: bl.AttentionParams, m: int = DEFAULT_WINDOW):
        super().__init__(m)
        self.params = params

    def _aggregate(self, window):
        return bl.window_attention_forward(window, self.params)

    def param_items(self):
        p = self.params
        return [("attn.w_q", p.w_q), ("attn.w_k", p.w_k), ("attn.w_v", p.w_v)]

    def with_params(self, vals: dict):
        return AttnCore(
            bl.AttentionParams(w_q=vals["attn.w_q"], w_k=vals["attn.w_k"], w_v=vals["attn.w_v"]),
            self.m,
        )


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True, eq=False)
class Model:
    config: ModelConfig
    funnel: FunnelParams
    core: object
    head_weight: np.ndarray  # (class_count, d_tok)
    head_bias: np.ndarray  # (class_count,)

    def __post_init__(self):
        hw = np.asarray(self.head_weight, dtype=np.float64)
        hb = np.asarray(self.head_bias, dtype=np.float64)
        c = self.config
        if self.funnel.d_emb != c.d_emb or self.funnel.d_tok != c.d_tok:
            raise InvalidConfigError("funnel dims disagree with config")
        if hw.shape != (c.class_count, c.d_tok) or hb.shape != (c.class_count,):
            raise InvalidConfigError("head dims disagree with config")
        object.__setattr__(self, "head_weight", _frozen(hw))
        object.__setattr__(self, "head_bias", _frozen(hb))

    @property
    def ssm(self) -> ss.SelectiveParams:
        if self.core.kind != "selective":
            raise InvalidInputError(f"model's temporal core is {self.core.kind!r}")
        return self.core.params

    def param_items(self):
        items = [("funnel.weight", self.funnel.weight), ("funnel.bias", self.funnel.bias)]
        items += self.core.param_items()
        items += [("head.weight", self.head_weight), ("head.bias", self.head_bias)]
        return items

    def param_dict(self) -> dict[str, np.ndarray]:
        return dict(self.param_items())

    def param_count(self) -> int:
        return sum(v.size for _, v in self.param_items())

    def with_params(self, vals: dict) -> "Model":
        return Model(
            config=self.config,
            funnel=FunnelParams(weight=vals["funnel.weight"], bias=vals["funnel.bias"]),
            core=self.core.with_params(vals),
            head_weight=vals["head.weight"],
            head_bias=vals["head.bias"],
        )


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_model(
    config: ModelConfig,
    temporal: str = "selective",
    window_m: int = DEFAULT_WINDOW,
) -> Model:
    """Seeded initialization; same (config, temporal) always yields the same model.

    Weights draw from uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)). The selective
    a_log spaces the decay rates geometrically over [-1, -1e-2] so different
    state columns remember at different horizons; d_skip starts at 1 and the
    step-size bias at 0 (softplus(0) ~ 0.69).
    """
    if temporal not in TEMPORAL_KINDS:
        raise InvalidConfigError(f"unknown temporal module {temporal!r}")
    c = config
    rng = np.random.Generator(np.random.PCG64(c.seed))
    funnel = FunnelParams(
        weight=_uniform(rng, c.d_emb, (c.d_tok, c.d_emb)),
        bias=_uniform(rng, c.d_emb, (c.d_tok,)),
    )
    if temporal == "selective":
        core = SelectiveCore(
            ss.SelectiveParams(
                a_log=np.linspace(np.log(1e-2), 0.0, c.d_state),
                w_delta=_uniform(rng, c.d_tok, (c.d_tok,)),
                b_delta=0.0,
                w_b=_uniform(rng, c.d_tok, (c.d_state, c.d_tok)),
                w_c=_uniform(rng, c.d_tok, (c.d_state, c.d_tok)),
                d_skip=np.ones(c.d_tok),
            )
        )
    elif temporal == "rnn":
        # token-width state keeps the parameter count within ~10% of the
        # selective module's (the comparison is at parameter parity)
        d = c.d_tok
        core = RnnCore(
            bl.FixedRecurrenceParams(
                a=_uniform(rng, d, (d, d)),
                b=_uniform(rng, c.d_tok, (d, c.d_tok)),
                c=_uniform(rng, d, (c.d_tok, d)),
                b_h=np.zeros(d),
                b_o=np.zeros(c.d_tok),
                phi_h="tanh",
                phi_o="identity",
            )
        )
    elif temporal == "lstm":
        h = c.d_tok
        core = LstmCore(
            bl.GatedRecurrenceParams(
                w_x=_uniform(rng, c.d_tok, (4 * h, c.d_tok)),
                w_h=_uniform(rng, h, (4 * h, h)),
                bias=np.zeros(4 * h),
            )
        )
    elif temporal == "convpool":
        core = ConvPoolCore(
            bl.ConvPoolParams(
                kernel=_uniform(rng, 3 * c.d_tok, (3, c.d_tok, c.d_tok)),
                bias=np.zeros(c.d_tok),
            ),
            m=window_m,
        )
    else:
        core = AttnCore(
            bl.AttentionParams(
                w_q=_uniform(rng, c.d_tok, (c.d_tok, c.d_tok)),
                w_k=_uniform(rng, c.d_tok, (c.d_tok, c.d_tok)),
                w_v=_uniform(rng, c.d_tok, (c.d_tok, c.d_tok)),
            ),
            m=window_m,
        )
    return Model(
        config=c,
        funnel=funnel,
        core=core,
        head_weight=_uniform(rng, c.d_tok, (c.class_count, c.d_tok)),
        head_bias=_uniform(rng, c.d_tok, (c.class_count,)),
    )


# ---------------------------------------------------------------------------
# inference


@dataclass(frozen=True, eq=False)
class PredictionRecord:
    frame_index: int
    logits: np.ndarray
    decoded: frozenset


def decode(logits: np.ndarray, arity: str, threshold: float = 0.5) -> frozenset:
    """Logits -> label set. Single-label: argmax with ties to the lowest id;
    multi-label: every class whose sigmoid clears the threshold."""
    logits = np.asarray(logits, dtype=np.float64)
    if arity == ARITY_SINGLE:
        return frozenset([int(np.argmax(logits))])
    if arity == ARITY_MULTI:
        return frozenset(np.flatnonzero(sigmoid(logits) > threshold).tolist())
    raise InvalidInputError(f"unknown arity {arity!r}")


@dataclass
class StreamSession:
    """One live stream: model reference plus the temporal state it owns."""

    model: Model
    state: object
    frames_seen: int = 0


def start_session(model: Model) -> StreamSession:
    return StreamSession(model=model, state=model.core.init_state())


def forward_frame(session: StreamSession, emb, threshold: float = 0.5) -> PredictionRecord:
    """Advance one frame: funnel -> temporal step -> head -> decode."""
    values = emb.values if isinstance(emb, FrameEmbedding) else np.asarray(emb, dtype=np.float64)
    model = session.model
    token = funnel_forward_values(values, model.funnel)
    y, session.state = model.core.step(session.state, token)
    logits = model.head_weight @ y + model.head_bias
    record = PredictionRecord(
        frame_index=session.frames_seen,
        logits=logits,
        decoded=decode(logits, model.config.label_arity, threshold),
    )
    session.frames_seen += 1
    return record


def forward_sequence(model: Model, embs, threshold: float = 0.5) -> list[PredictionRecord]:
    """Whole-sequence evaluation; agrees with per-frame streaming."""
    if isinstance(embs, EmbeddingStream):
        embs = embs.values
    mat = np.asarray(embs, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[1] != model.config.d_emb:
        raise InvalidInputError(f"expected (n, {model.config.d_emb}) embeddings, got {mat.shape}")
    tokens = funnel_forward_values(mat, model.funnel)
    ys, _ = model.core.scan(tokens, model.core.init_state())
    logits = ys @ model.head_weight.T + model.head_bias
    return [
        PredictionRecord(
            frame_index=i,
            logits=logits[i],
            decoded=decode(logits[i], model.config.label_arity, threshold),
        )
        for i in range(mat.shape[0])
    ]


# ---------------------------------------------------------------------------
# checkpoint container

CHECKPOINT_MAGIC = b"AVCM"
CHECKPOINT_VERSION = 1
_KIND_CODES = {k: i for i, k in enumerate(TEMPORAL_KINDS)}
_PHI_CODES = {"identity": 0, "tanh": 1}
_CKPT_HEADER = struct.Struct("<4sIIIIIBQBIBB")
# magic, version, d_emb, d_tok, d_state, class_count, arity, seed,
# kind, window_m, phi_h, phi_o


def save_model(model: Model, sink) -> int:
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "wb") as f:
            return save_model(model, f)
    c = model.config
    phi_h = phi_o = 0
    window_m = 0
    if model.core.kind == "rnn":
        phi_h = _PHI_CODES[model.core.params.phi_h]
        phi_o = _PHI_CODES[model.core.params.phi_o]
    if model.core.kind in ("convpool", "attn"):
        window_m = model.core.m
    n = sink.write(
        _CKPT_HEADER.pack(
            CHECKPOINT_MAGIC,
            CHECKPOINT_VERSION,
            c.d_emb,
            c.d_tok,
            c.d_state,
            c.class_count,
            0 if c.label_arity == ARITY_SINGLE else 1,
            c.seed,
            _KIND_CODES[model.core.kind],
            window_m,
            phi_h,
            phi_o,
        )
    )
    for _, arr in model.param_items():
        n += sink.write(np.asarray(arr, dtype="<f8").tobytes())
    return n


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedPayloadError(f"checkpoint truncated while reading {what}")
    return buf


def load_model(source) -> Model:
    if isinstance(source, (bytes, bytearray)):
        import io

        return load_model(io.BytesIO(source))
    if isinstance(source, str) or hasattr(source, "__fspath__"):
        with open(source, "rb") as f:
            return load_model(f)

    raw = _read_exact(source, _CKPT_HEADER.size, "header")
    (magic, version, d_emb, d_tok, d_state, class_count, arity, seed,
     kind_code, window_m, phi_h, phi_o) = _CKPT_HEADER.unpack(raw)
    if magic != CHECKPOINT_MAGIC:
        raise BadMagicError(f"expected magic {CHECKPOINT_MAGIC!r}, found {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(f"unsupported checkpoint version {version}")
    if kind_code >= len(TEMPORAL_KINDS):
        raise TruncatedPayloadError(f"unknown temporal kind code {kind_code}")
    kind = TEMPORAL_KINDS[kind_code]
    config = ModelConfig(
        d_emb=d_emb,
        d_tok=d_tok,
        d_state=d_state,
        class_count=class_count,
        label_arity=ARITY_SINGLE if arity == 0 else ARITY_MULTI,
        seed=seed,
    )
    template = init_model(config, temporal=kind, window_m=window_m or DEFAULT_WINDOW)
    if kind == "rnn":
        phi_names = {v: k for k, v in _PHI_CODES.items()}
        p = template.core.params
        template = Model(
            config=config,
            funnel=template.funnel,
            core=RnnCore(
                bl.FixedRecurrenceParams(
                    a=p.a, b=p.b, c=p.c, b_h=p.b_h, b_o=p.b_o,
                    phi_h=phi_names[phi_h], phi_o=phi_names[phi_o],
                )
            ),
            head_weight=template.head_weight,
            head_bias=template.head_bias,
        )
    vals = {}
    for name, arr in template.param_items():
        blob = _read_exact(source, 8 * arr.size, name)
        vals[name] = np.frombuffer(blob, dtype="<f8").reshape(arr.shape).copy()
    return template.with_params(vals)
