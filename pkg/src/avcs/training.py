"""Frame-weighted training loop.

The per-video loss is a weighted dot product over per-frame losses:
motion-focused tasks weight frame i by i/N^2 (later frames dominate),
scene-focused tasks weight every frame by 1/N. Gradients come from the
reverse-mode tape in `autodiff`, flowing through the classifier head, the
temporal module (including the selective step-size/input/output generators
and the chunked scan), and the funnel. The optimizer is decoupled-weight-
decay Adam with cosine-annealing-with-warm-restarts learning rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidConfigError, InvalidInputError, NumericError
from .pipeline import Model
from .stream import ARITY_MULTI, ARITY_SINGLE

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_BIG_NEG = 1e9  # additive mask for the chunk decay matrix; exp(-1e9) == 0


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Non-negative per-frame loss weights, one of the two spec'd profiles."""

    w: np.ndarray
    mode: str

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 1 or w.shape[0] < 1:
            raise InvalidInputError("weight vector must be a non-empty 1-D array")
        if np.any(w < 0):
            raise InvalidInputError("weights must be >= 0")
        object.__setattr__(self, "w", w)


def frame_weights(n: int, mode: str) -> WeightVector:
    """motion: w_i = i/N^2 (unnormalized, sums to (N+1)/2N); scene: w_i = 1/N."""
    if n < 1:
        raise InvalidInputError("need at least one frame")
    if mode == "motion":
        return WeightVector(np.arange(1, n + 1, dtype=np.float64) / (n * n), mode)
    if mode == "scene":
        return WeightVector(np.full(n, 1.0 / n), mode)
    raise InvalidConfigError(f"unknown weight mode {mode!r}")


def frame_loss(logits: np.ndarray, label, arity: str) -> float:
    """Single frame loss: softmax cross-entropy (single-label) or mean binary
    cross-entropy over classes (multi-label), both log-sum-exp stabilized."""
    z = np.asarray(logits, dtype=np.float64)
    if arity == ARITY_SINGLE:
        m = z.max()
        lse = m + np.log(np.sum(np.exp(z - m)))
        return float(lse - z[int(label)])
    if arity == ARITY_MULTI:
        y = np.zeros_like(z)
        y[list(label)] = 1.0
        # softplus(z) - z*y, stable for both signs of z
        per_class = np.logaddexp(0.0, z) - z * y
        return float(per_class.mean())
    raise InvalidInputError(f"unknown arity {arity!r}")


def sequence_loss(records, labels, weights: WeightVector) -> float:
    """Weighted dot product of per-frame losses: w . [L_1 .. L_N]."""
    if len(records) != len(labels) or len(records) != weights.w.shape[0]:
        raise InvalidInputError("records, labels, and weights must have equal length")
    arity = ARITY_SINGLE if isinstance(labels[0], (int, np.integer)) else ARITY_MULTI
    total = 0.0
    for rec, lab, w in zip(records, labels, weights.w):
        logits = rec.logits if hasattr(rec, "logits") else rec
        total += w * frame_loss(logits, lab, arity)
    return float(total)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    lr_max: float = 1e-3
    lr_min: float = 1e-6
    restart_period: int = 10
    weight_decay: float = 0.01
    seed: int = 0
    precision: str = "f64"
    weight_mode: str = "scene"
    patience: int = 20
    train_chunk_len: int = 32

    def __post_init__(self):
        if self.lr_min >= self.lr_max:
            raise InvalidConfigError("lr_min must be < lr_max")
        if self.restart_period < 1:
            raise InvalidConfigError("restart_period must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidConfigError("epochs and batch_size must be >= 1")
        if self.weight_mode not in ("motion", "scene"):
            raise InvalidConfigError(f"unknown weight mode {self.weight_mode!r}")


def cosine_lr(epoch: int, cfg: TrainConfig) -> float:
    """lr_min + (lr_max - lr_min)(1 + cos(pi * t/T))/2 with restart every T epochs."""
    t_cur = epoch % cfg.restart_period
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (
        1.0 + math.cos(math.pi * t_cur / cfg.restart_period)
    )


@dataclass(frozen=True, eq=False)
class GradientBundle:
    """Per-parameter gradient arrays keyed like Model.param_dict()."""

    values: dict

    def __getitem__(self, k):
        return self.values[k]

    def keys(self):
        return self.values.keys()


# ---------------------------------------------------------------------------
# differentiable forward graphs, one per temporal kind


def _graph_funnel(embs: np.ndarray, p: dict) -> Tensor:
    pre = ad.einsum("bnd,td->bnt", Tensor(embs), p["funnel.weight"]) + p["funnel.bias"]
    return pre.relu()


def _graph_selective(x: Tensor, p: dict, d_state: int, chunk_len: int) -> Tensor:
    bsz, n, d_tok = x.shape
    a_diag = -(p["ssm.a_log"].exp())  # (K,)
    z = ad.einsum("bnj,j->bn", x, p["ssm.w_delta"]) + p["ssm.b_delta"]
    delta = z.softplus()  # (B, n)
    s0 = Tensor(np.zeros((bsz, d_tok, d_state)))
    chunks = []
    for lo in range(0, n, chunk_len):
        hi = min(lo + chunk_len, n)
        m = hi - lo
        xc = x[:, lo:hi]
        dc = delta[:, lo:hi]
        ld = ad.einsum("bl,k->blk", dc, a_diag)
        cum = ld.cumsum(axis=1)  # (B, m, K)
        diff = cum.reshape(bsz, m, 1, d_state) - cum.reshape(bsz, 1, m, d_state)
        mask = np.tril(np.ones((m, m)))[None, :, :, None]
        w = (diff * mask + (mask - 1.0) * _BIG_NEG).exp()
        bb = ad.einsum("blj,kj->blk", xc, p["ssm.w_b"]) * dc.reshape(bsz, m, 1)
        contrib = ad.einsum("btuk,buj,buk->btjk", w, xc, bb)
        states = ad.einsum("btk,bjk->btjk", cum.exp(), s0) + contrib
        cs = ad.einsum("blj,kj->blk", xc, p["ssm.w_c"])
        chunks.append(ad.einsum("btjk,btk->btj", states, cs) + xc * p["ssm.d_skip"])
        s0 = states[:, m - 1]
    return ad.concat(chunks, axis=1)


def _graph_rnn(x: Tensor, p: dict, phi_h: str, phi_o: str) -> Tensor:
    bsz, n, _ = x.shape
    d = p["rnn.a"].shape[0]
    s = Tensor(np.zeros((bsz, d)))
    ys = []
    for t in range(n):
        pre = (
            ad.einsum("bd,ed->be", s, p["rnn.a"])
            + ad.einsum("bj,dj->bd", x[:, t], p["rnn.b"])
            + p["rnn.b_h"]
        )
        s = pre.tanh() if phi_h == "tanh" else pre
        out = ad.einsum("bd,od->bo", s, p["rnn.c"]) + p["rnn.b_o"]
        ys.append(out.tanh() if phi_o == "tanh" else out)
    return ad.stack(ys, axis=1)


def _graph_lstm(x: Tensor, p: dict, hidden: int) -> Tensor:
    bsz, n, _ = x.shape
    h = Tensor(np.zeros((bsz, hidden)))
    c = Tensor(np.zeros((bsz, hidden)))
    ys = []
    for t in range(n):
        z = (
            ad.einsum("bj,gj->bg", x[:, t], p["lstm.w_x"])
            + ad.einsum("bh,gh->bg", h, p["lstm.w_h"])
            + p["lstm.bias"]
        )
        i = z[:, :hidden].sigmoid()
        f = z[:, hidden : 2 * hidden].sigmoid()
        g = z[:, 2 * hidden : 3 * hidden].tanh()
        o = z[:, 3 * hidden :].sigmoid()
        c = f * c + i * g
        h = o * c.tanh()
        ys.append(h)
    return ad.stack(ys, axis=1)


def _graph_convpool(x: Tensor, p: dict, m: int) -> Tensor:
    bsz, n, d = x.shape
    k0, k1, k2 = p["conv.kernel"][0], p["conv.kernel"][1], p["conv.kernel"][2]
    bias = p["conv.bias"]
    resp = None
    if n > 2:
        resp = (
            ad.einsum("bnj,dj->bnd", x[:, : n - 2], k0)
            + ad.einsum("bnj,dj->bnd", x[:, 1 : n - 1], k1)
            + ad.einsum("bnj,dj->bnd", x[:, 2:], k2)
            + bias
        )
    ys = []
    for t in range(n):
        w = min(t + 1, m)  # live window length; shorter ones zero-pad left
        if w == 1:
            ys.append(ad.einsum("bj,dj->bd", x[:, t], k2) + bias)
        elif w == 2:
            ys.append(
                ad.einsum("bj,dj->bd", x[:, t - 1], k1)
                + ad.einsum("bj,dj->bd", x[:, t], k2)
                + bias
            )
        else:
            # valid conv responses of window x[t-w+1..t] are resp[t-w+1 .. t-2]
            ys.append(resp[:, t - w + 1 : t - 1].max(axis=1))
    return ad.stack(ys, axis=1)


def _graph_attn(x: Tensor, p: dict, m: int) -> Tensor:
    bsz, n, d = x.shape
    scale = 1.0 / np.sqrt(d)
    q = ad.einsum("bnj,dj->bnd", x, p["attn.w_q"])
    k = ad.einsum("bnj,dj->bnd", x, p["attn.w_k"])
    v = ad.einsum("bnj,dj->bnd", x, p["attn.w_v"])
    ys = []
    for t in range(n):
        a = max(0, t - m + 1)
        scores = ad.einsum("bwd,bd->bw", k[:, a : t + 1], q[:, t]) * scale
        attn = ad.softmax(scores, axis=1)
        ys.append(ad.einsum("bw,bwd->bd", attn, v[:, a : t + 1]))
    return ad.stack(ys, axis=1)


def _graph_temporal(tokens: Tensor, model: Model, p: dict, chunk_len: int) -> Tensor:
    core = model.core
    if core.kind == "selective":
        return _graph_selective(tokens, p, model.config.d_state, chunk_len)
    if core.kind == "rnn":
        return _graph_rnn(tokens, p, core.params.phi_h, core.params.phi_o)
    if core.kind == "lstm":
        return _graph_lstm(tokens, p, core.params.hidden)
    if core.kind == "convpool":
        return _graph_convpool(tokens, p, core.m)
    if core.kind == "attn":
        return _graph_attn(tokens, p, core.m)
    raise InvalidConfigError(f"no training graph for temporal kind {core.kind!r}")


def _frame_loss_matrix(logits: Tensor, labels, arity: str, n_frames) -> Tensor:
    bsz, n, n_cls = logits.shape
    if arity == ARITY_SINGLE:
        onehot = np.zeros((bsz, n, n_cls))
        for b, seq in enumerate(labels):
            for i, c in enumerate(seq):
                onehot[b, i, int(c)] = 1.0
        lse = ad.logsumexp(logits, axis=2)
        return lse - (logits * onehot).sum(axis=2)
    hot = np.zeros((bsz, n, n_cls))
    for b, seq in enumerate(labels):
        for i, lab in enumerate(seq):
            for c in lab:
                hot[b, i, int(c)] = 1.0
    return (logits.softplus() - logits * hot).mean(axis=2)


def batched_loss_graph(
    model: Model,
    embs: np.ndarray,
    labels,
    weights: np.ndarray,
    chunk_len: int = 32,
):
    """Differentiable mean-over-sequences weighted loss for padded batches.

    embs: (B, n, d_emb); labels: per sequence, per frame (padded entries may
    repeat anything; their weight must be 0); weights: (B, n) with zeros on
    padding. Returns (loss Tensor, params dict, frame-loss Tensor).
    """
    bsz = embs.shape[0]
    n_frames = [len(seq) for seq in labels]
    params = {name: Tensor(arr) for name, arr in model.param_items()}
    tokens = _graph_funnel(embs, params)
    ys = _graph_temporal(tokens, model, params, chunk_len)
    logits = ad.einsum("bnt,ct->bnc", ys, params["head.weight"]) + params["head.bias"]
    frame = _frame_loss_matrix(logits, labels, model.config.label_arity, n_frames)
    if not np.all(np.isfinite(frame.data)):
        b, i = np.argwhere(~np.isfinite(frame.data))[0]
        raise NumericError(f"non-finite frame loss at sequence {b}, frame {i}")
    loss = (frame * weights).sum() * (1.0 / bsz)
    return loss, params, frame


def _pad_batch(model: Model, items, weight_mode: str):
    """items: list of (embs (n, d_emb), frame_labels). Returns padded arrays."""
    arity = model.config.label_arity
    n_max = max(e.shape[0] for e, _ in items)
    bsz = len(items)
    embs = np.zeros((bsz, n_max, model.config.d_emb))
    weights = np.zeros((bsz, n_max))
    labels = []
    pad_label = 0 if arity == ARITY_SINGLE else frozenset()
    for b, (e, labs) in enumerate(items):
        n = e.shape[0]
        embs[b, :n] = e
        weights[b, :n] = frame_weights(n, weight_mode).w
        labels.append(list(labs) + [pad_label] * (n_max - n))
    return embs, labels, weights


def backward(model: Model, embs, labels, weights: WeightVector):
    """Loss and exact reverse-mode gradients for one sequence.

    Returns (loss, GradientBundle) with gradient arrays mirroring the model's
    parameter layout.
    """
    embs = np.asarray(embs, dtype=np.float64)
    if embs.ndim != 2:
        raise InvalidInputError("embs must be (n, d_emb)")
    if embs.shape[0] != len(labels) or embs.shape[0] != weights.w.shape[0]:
        raise InvalidInputError("embs, labels, and weights must agree in length")
    loss_t, params, _ = batched_loss_graph(
        model, embs[None], [list(labels)], weights.w[None], chunk_len=32
    )
    loss_t.backward()
    grads = {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.items()
    }
    return float(loss_t.data), GradientBundle(grads)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def optimizer_step(
    model: Model,
    grads: GradientBundle,
    opt_state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> tuple[Model, AdamState]:
    """One decoupled-weight-decay adaptive-moment update at the given lr."""
    opt_state.t += 1
    t = opt_state.t
    new_vals = {}
    for name, p in model.param_items():
        g = np.asarray(grads[name], dtype=np.float64)
        m = opt_state.m.get(name)
        v = opt_state.v.get(name)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
        v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * g * g
        opt_state.m[name] = m
        opt_state.v[name] = v
        m_hat = m / (1 - ADAM_BETA1**t)
        v_hat = v / (1 - ADAM_BETA2**t)
        new_vals[name] = p - lr * (m_hat / (np.sqrt(v_hat) + ADAM_EPS) + weight_decay * p)
    return model.with_params(new_vals), opt_state


# ---------------------------------------------------------------------------
# training loop


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    val_metric: float

    def as_row(self):
        return [self.epoch, self.lr, self.train_loss, self.val_loss, self.val_metric]


def _dataset_items(model: Model, dataset):
    items = []
    for stream, _spans in dataset:
        if stream.d_emb != model.config.d_emb:
            raise InvalidInputError("stream d_emb does not match model")
        items.append((np.asarray(stream.values, dtype=np.float64), stream.labels))
    return items


def _eval_loss(model: Model, items, weight_mode: str, batch_size: int, chunk_len: int):
    total = 0.0
    count = 0
    for lo in range(0, len(items), batch_size):
        chunk = items[lo : lo + batch_size]
        embs, labels, weights = _pad_batch(model, chunk, weight_mode)
        loss_t, _, _ = batched_loss_graph(model, embs, labels, weights, chunk_len)
        total += float(loss_t.data) * len(chunk)
        count += len(chunk)
    return total / max(count, 1)


def train(dataset, model: Model, config: TrainConfig, val_dataset=None):
    """Run the frame-weighted training loop; deterministic given config.seed.

    dataset / val_dataset: lists of (EmbeddingStream, spans) pairs as produced
    by the synthetic generator. Returns (trained model, list of EpochLog).
    """
    from . import metrics as me  # local import to keep module load light

    if not dataset:
        raise InvalidInputError("training dataset is empty")
    items = _dataset_items(model, dataset)
    val_items = _dataset_items(model, val_dataset) if val_dataset else None
    rng = np.random.Generator(np.random.PCG64(config.seed))
    opt = AdamState()
    logs: list[EpochLog] = []
    best_val = np.inf
    stale = 0

    for epoch in range(config.epochs):
        lr = cosine_lr(epoch, config)
        # bucket similar lengths together (less padding), then visit the
        # buckets in random order; both draws are seeded, so runs reproduce
        order = rng.permutation(len(items))
        order = sorted(order, key=lambda i: items[i][0].shape[0])
        starts = rng.permutation(range(0, len(order), config.batch_size))
        running = 0.0
        seen = 0
        for lo in starts:
            batch = [items[i] for i in order[lo : lo + config.batch_size]]
            embs, labels, weights = _pad_batch(model, batch, config.weight_mode)
            loss_t, params, _ = batched_loss_graph(
                model, embs, labels, weights, config.train_chunk_len
            )
            if not np.isfinite(loss_t.data):
                raise NumericError(f"training diverged at epoch {epoch} (loss not finite)")
            loss_t.backward()
            grads = GradientBundle(
                {
                    name: (t.grad if t.grad is not None else np.zeros_like(t.data))
                    for name, t in params.items()
                }
            )
            model, opt = optimizer_step(model, grads, opt, lr, config.weight_decay)
            running += float(loss_t.data) * len(batch)
            seen += len(batch)
        train_loss = running / seen

        if val_items is not None:
            val_loss = _eval_loss(
                model, val_items, config.weight_mode, config.batch_size, config.train_chunk_len
            )
            val_metric = me.quick_metric(model, val_dataset)
        else:
            val_loss = float("nan")
            val_metric = float("nan")
        logs.append(EpochLog(epoch, lr, train_loss, val_loss, val_metric))

        if val_items is not None:
            if val_loss < best_val - 1e-9:
                best_val = val_loss
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    return model, logs


def write_training_log(logs, path):
    with open(path, "w") as f:
        f.write("epoch,lr,train_loss,val_loss,val_metric\n")
        for row in logs:
            f.write(
                f"{row.epoch},{row.lr:.10g},{row.train_loss:.10g},"
                f"{row.val_loss:.10g},{row.val_metric:.10g}\n"
            )
