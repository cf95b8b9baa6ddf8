"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor records the operation that produced it plus closures that push the
output gradient back to its inputs; `backward()` replays the tape in reverse
topological order. Training builds its whole loss graph from these ops and
every gradient is cross-checked against central finite differences in the
test suite.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "_prev", "_push")

    def __init__(self, data, prev=(), push=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._prev = prev
        self._push = push  # callable(grad_out) -> None, accumulates into prev

    @property
    def shape(self):
        return self.data.shape

    def _acc(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data + other.data, (self, other))

        def push(g):
            self._acc(_unbroadcast(g, self.data.shape))
            other._acc(_unbroadcast(g, other.data.shape))

        out._push = push
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, (self,))
        out._push = lambda g: self._acc(-g)
        return out

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data * other.data, (self, other))

        def push(g):
            self._acc(_unbroadcast(g * other.data, self.data.shape))
            other._acc(_unbroadcast(g * self.data, other.data.shape))

        out._push = push
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data / other.data, (self, other))

        def push(g):
            self._acc(_unbroadcast(g / other.data, self.data.shape))
            other._acc(_unbroadcast(-g * self.data / other.data**2, other.data.shape))

        out._push = push
        return out

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __matmul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data @ other.data, (self, other))

        def push(g):
            self._acc(g @ other.data.swapaxes(-1, -2))
            other._acc(self.data.swapaxes(-1, -2) @ g)

        out._push = push
        return out

    # -- elementwise ------------------------------------------------------

    def exp(self):
        e = np.exp(self.data)
        out = Tensor(e, (self,))
        out._push = lambda g: self._acc(g * e)
        return out

    def log(self):
        out = Tensor(np.log(self.data), (self,))
        out._push = lambda g: self._acc(g / self.data)
        return out

    def tanh(self):
        t = np.tanh(self.data)
        out = Tensor(t, (self,))
        out._push = lambda g: self._acc(g * (1.0 - t * t))
        return out

    def sigmoid(self):
        z = self.data
        s = np.empty_like(z)
        pos = z >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        s[~pos] = ez / (1.0 + ez)
        out = Tensor(s, (self,))
        out._push = lambda g: self._acc(g * s * (1.0 - s))
        return out

    def softplus(self):
        s = np.logaddexp(0.0, self.data)
        out = Tensor(s, (self,))
        z = self.data
        sig = np.empty_like(z)
        pos = z >= 0
        sig[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        sig[~pos] = ez / (1.0 + ez)
        out._push = lambda g: self._acc(g * sig)
        return out

    def relu(self):
        mask = self.data > 0
        out = Tensor(self.data * mask, (self,))
        out._push = lambda g: self._acc(g * mask)
        return out

    # -- reductions and rearrangement --------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def push(g):
            if axis is None:
                self._acc(np.broadcast_to(g, self.data.shape).copy())
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                self._acc(np.broadcast_to(gg, self.data.shape).copy())

        out._push = push
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def cumsum(self, axis):
        out = Tensor(np.cumsum(self.data, axis=axis), (self,))

        def push(g):
            self._acc(np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis))

        out._push = push
        return out

    def max(self, axis, keepdims=False):
        """Max along one axis; gradient routes to the first max position."""
        idx = np.argmax(self.data, axis=axis)
        val = np.take_along_axis(self.data, np.expand_dims(idx, axis), axis=axis)
        out = Tensor(val if keepdims else np.squeeze(val, axis=axis), (self,))

        def push(g):
            gg = g if keepdims else np.expand_dims(g, axis)
            buf = np.zeros_like(self.data)
            np.put_along_axis(buf, np.expand_dims(idx, axis), gg, axis=axis)
            self._acc(buf)

        out._push = push
        return out

    def reshape(self, *shape):
        orig = self.data.shape
        out = Tensor(self.data.reshape(*shape), (self,))
        out._push = lambda g: self._acc(g.reshape(orig))
        return out

    def __getitem__(self, idx):
        out = Tensor(self.data[idx], (self,))

        def push(g):
            buf = np.zeros_like(self.data)
            np.add.at(buf, idx, g)
            self._acc(buf)

        out._push = push
        return out

    # -- driver -------------------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise InvalidInputError("backward() expects a scalar loss")
        topo: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._push is not None and node.grad is not None:
                node._push(node.grad)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def einsum(spec: str, *tensors: Tensor) -> Tensor:
    """Differentiable einsum; every operand label set must be repetition-free."""
    tensors = tuple(as_tensor(t) for t in tensors)
    ins, out_spec = spec.split("->")
    in_specs = ins.split(",")
    if len(in_specs) != len(tensors):
        raise InvalidInputError("einsum spec arity mismatch")
    out = Tensor(np.einsum(spec, *[t.data for t in tensors]), tensors)

    def push(g):
        for i, t in enumerate(tensors):
            others = [in_specs[j] for j in range(len(tensors)) if j != i]
            datas = [tensors[j].data for j in range(len(tensors)) if j != i]
            sub = ",".join([out_spec] + others) + "->" + in_specs[i]
            t._acc(np.einsum(sub, g, *datas))

    out._push = push
    return out


def stack(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.stack([t.data for t in tensors], axis=axis), tuple(tensors))

    def push(g):
        for i, t in enumerate(tensors):
            t._acc(np.take(g, i, axis=axis))

    out._push = push
    return out


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]

    def push(g):
        offset = 0
        for t, s in zip(tensors, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + s)
            t._acc(g[tuple(sl)])
            offset += s

    out._push = push
    return out


def logsumexp(t: Tensor, axis: int) -> Tensor:
    """Stable log-sum-exp along an axis (shift by a detached max)."""
    shift = np.max(t.data, axis=axis, keepdims=True)
    return (t - shift).exp().sum(axis=axis).log() + as_tensor(np.squeeze(shift, axis=axis))


def softmax(t: Tensor, axis: int) -> Tensor:
    shift = np.max(t.data, axis=axis, keepdims=True)
    e = (t - shift).exp()
    return e / e.sum(axis=axis, keepdims=True)
