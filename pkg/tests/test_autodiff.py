"""Finite-difference checks for every tape op in isolation."""

import numpy as np
import pytest

import avcs.autodiff as ad
from avcs.autodiff import Tensor
from avcs.errors import InvalidInputError


def fd_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        hi = x.copy()
        hi[idx] += eps
        lo = x.copy()
        lo[idx] -= eps
        g[idx] = (f(hi) - f(lo)) / (2 * eps)
    return g


def check(build, *shapes, seed=0, tol=1e-6):
    """build(*tensors) -> scalar Tensor; compares each input's gradient."""
    rng = np.random.default_rng(seed)
    values = [rng.normal(size=s) * 0.8 + 0.2 for s in shapes]
    tensors = [Tensor(v) for v in values]
    out = build(*tensors)
    out.backward()
    for i, (t, v) in enumerate(zip(tensors, values)):
        def scalar(x, i=i):
            args = [Tensor(values[j]) if j != i else Tensor(x) for j in range(len(values))]
            return float(build(*args).data)

        fd = fd_grad(scalar, v)
        got = t.grad if t.grad is not None else np.zeros_like(v)
        denom = np.maximum(np.maximum(np.abs(fd), np.abs(got)), 1e-4)
        assert np.max(np.abs(got - fd) / denom) < tol, f"input {i}"


class TestElementwise:
    def test_add_mul_broadcast(self):
        check(lambda a, b: (a + b * 2.0 + a * b).sum(), (3, 4), (4,))

    def test_sub_div(self):
        check(lambda a, b: (a / (b * b + 1.0) - b).sum(), (5,), (5,))

    def test_exp_log(self):
        check(lambda a: (a * a + 1.0).log().exp().sum(), (6,))

    def test_tanh_sigmoid_softplus_relu(self):
        check(lambda a: (a.tanh() + a.sigmoid() + a.softplus() + (a + 0.3).relu()).sum(), (7,))

    def test_neg_rsub_rdiv(self):
        check(lambda a: (1.0 - (-a) + 2.0 / (a * a + 1.0)).sum(), (4,))


class TestStructural:
    def test_matmul(self):
        check(lambda a, b: (a @ b).sum(), (3, 4), (4, 2))

    def test_sum_axis_keepdims_mean(self):
        check(lambda a: (a.sum(axis=1, keepdims=True) * a).mean(), (3, 5))

    def test_cumsum(self):
        check(lambda a: (a.cumsum(axis=0) * a.cumsum(axis=1)).sum(), (4, 3))

    def test_max_routes_to_argmax(self):
        check(lambda a: (a.max(axis=1) * 2.0).sum(), (4, 6))

    def test_getitem_slices_and_int(self):
        check(lambda a: (a[1:, :2] + a[0, :2]).sum(), (4, 3))

    def test_reshape(self):
        check(lambda a: (a.reshape(6) * a.reshape(6)).sum(), (2, 3))

    def test_stack_concat(self):
        check(
            lambda a, b: ad.stack([a, b], axis=0).sum() + ad.concat([a, b], axis=1).sum() * 0.5,
            (2, 3),
            (2, 3),
        )

    def test_einsum_three_operands(self):
        check(lambda a, b, c: ad.einsum("ij,jk,ik->i", a, b, c).sum(), (3, 4), (4, 2), (3, 2))

    def test_logsumexp_softmax(self):
        check(lambda a: ad.logsumexp(a, axis=1).sum() + (ad.softmax(a, axis=1) * a).sum(), (3, 5))


class TestDriver:
    def test_shared_subexpression_accumulates(self):
        x = Tensor(np.array([2.0]))
        y = x * x
        z = y + y
        z.backward()
        np.testing.assert_allclose(x.grad, [8.0])

    def test_backward_requires_scalar(self):
        with pytest.raises(InvalidInputError):
            Tensor(np.ones(3)).backward()

    def test_deep_chain_no_recursion_limit(self):
        x = Tensor(np.array([1.0]))
        y = x
        for _ in range(5000):
            y = y * 1.0001
        y.backward()
        assert x.grad is not None and np.isfinite(x.grad[0])
