"""Dimension-reducing feature head: linear map plus ReLU.

The funnel compresses each frame embedding (d_emb) into a narrower activity
token (d_tok < d_emb, enforced at construction). The compression bound is the
funnel's defining invariant; no information-theoretic quantity is estimated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .stream import FrameEmbedding, _frozen


@dataclass(frozen=True, eq=False)
class FunnelParams:
    """weight: (d_tok, d_emb), bias: (d_tok,); requires d_tok < d_emb."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise InvalidInputError(f"inconsistent funnel shapes {w.shape} / {b.shape}")
        if w.shape[0] >= w.shape[1]:
            raise InvalidInputError(
                f"funnel must reduce dimension: d_tok={w.shape[0]} >= d_emb={w.shape[1]}"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise InvalidInputError("funnel parameters contain non-finite entries")
        object.__setattr__(self, "weight", _frozen(w))
        object.__setattr__(self, "bias", _frozen(b))

    @property
    def d_emb(self) -> int:
        return self.weight.shape[1]

    @property
    def d_tok(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True, eq=False)
class ActivityToken:
    """Funnel output for one frame: non-negative (d_tok,) vector."""

    values: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise InvalidInputError(f"token must be a vector, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("token contains non-finite entries")
        if np.any(v < 0):
            raise InvalidInputError("token components must be >= 0")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def d_tok(self) -> int:
        return self.values.shape[0]


def funnel_forward_values(x: np.ndarray, p: FunnelParams) -> np.ndarray:
    """relu(W @ x + b) for a single vector or a (n, d_emb) batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != p.d_emb:
        raise InvalidInputError(f"expected d_emb={p.d_emb}, got {x.shape[-1]}")
    return np.maximum(0.0, x @ p.weight.T + p.bias)


def funnel_forward(x: FrameEmbedding, p: FunnelParams) -> ActivityToken:
    return ActivityToken(funnel_forward_values(x.values, p), frame_index=x.frame_index)


def funnel_backward(
    x: FrameEmbedding, p: FunnelParams, upstream_grad: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of funnel_forward w.r.t. (weight, bias, x).

    The ReLU subgradient at exactly 0 is taken as 0.
    """
    g = np.asarray(upstream_grad, dtype=np.float64)
    if g.shape != (p.d_tok,):
        raise InvalidInputError(f"upstream grad must be ({p.d_tok},), got {g.shape}")
    pre = p.weight @ x.values + p.bias
    gate = g * (pre > 0)
    grad_weight = np.outer(gate, x.values)
    grad_bias = gate
    grad_x = p.weight.T @ gate
    return grad_weight, grad_bias, grad_x
