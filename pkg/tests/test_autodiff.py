"""Reverse-mode gradients against central finite differences."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sclab.seedgen import autodiff as ad

EPS = 1e-6


def fd_check(fn, shapes, seed=0, positive=False, tol=1e-4):
    """Compare d<R, fn(x...)> against central differences for every input entry."""
    rng = np.random.default_rng(seed)
    xs = [rng.normal(size=s) for s in shapes]
    if positive:
        xs = [np.abs(x) + 0.5 for x in xs]
    ts = [ad.Tensor(x.copy()) for x in xs]
    out = fn(*ts)
    R = rng.normal(size=out.shape)
    ad.backward([out], [R])
    for k, x in enumerate(xs):
        for idx in np.ndindex(x.shape):
            xp = [y.copy() for y in xs]
            xm = [y.copy() for y in xs]
            xp[k][idx] += EPS
            xm[k][idx] -= EPS
            fp = (fn(*[ad.Tensor(y) for y in xp]).data * R).sum()
            fm = (fn(*[ad.Tensor(y) for y in xm]).data * R).sum()
            fd = (fp - fm) / (2 * EPS)
            an = 0.0 if ts[k].grad is None else ts[k].grad[idx]
            assert abs(fd - an) <= tol * max(abs(fd), abs(an), 1e-6), (k, idx, fd, an)


UNARY = {
    "gelu": ad.gelu,
    "relu_shifted": lambda a: ad.relu(a + 0.05),
    "layernorm": ad.layernorm,
    "normalize": ad.normalize,
    "softmax": lambda a: ad.softmax(a, axis=-1),
    "tmax": lambda a: ad.tmax(a, axis=1),
    "mean": lambda a: ad.mean(a, axis=0, keepdims=True),
    "transpose": lambda a: ad.transpose(a, (1, 0, 2)),
    "getitem": lambda a: a[:, 1:, ::2],
    "reshape": lambda a: ad.reshape(a, (4, -1)),
    "repeat_rows": lambda a: ad.repeat_rows(a, 2),
    "gather_rows": lambda a: ad.gather_rows(a, np.array([[0, 3, 3], [1, 1, 2]])),
    "split": lambda a: ad.split(a, 2, axis=2)[1] * ad.split(a, 2, axis=2)[0],
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_ops(name):
    fd_check(UNARY[name], [(2, 4, 4)])


def test_sqrt_and_div():
    fd_check(lambda a, b: ad.sqrt(a) / b, [(3, 4), (3, 4)], positive=True)


def test_broadcasting_binary_ops():
    fd_check(lambda a, b: (a + b) * (a - b) - 2.0 * b, [(2, 3, 4), (1, 4)])


def test_matmul_batched():
    fd_check(lambda a, b: a @ b, [(2, 3, 4), (4, 5)])
    fd_check(lambda a, b: a @ b, [(2, 3, 4), (2, 4, 2)], seed=1)


def test_concat_and_interleave():
    fd_check(lambda a, b: ad.interleave(ad.concat([a, b], axis=2), ad.concat([b, a], axis=2)),
             [(2, 3, 2), (2, 3, 2)])


def test_masked_softmax_zero_probability():
    x = ad.Tensor(np.array([[1.0, 2.0, 3.0]]))
    s = ad.softmax(x, mask=np.array([[True, False, True]]))
    assert s.data[0, 1] == 0.0
    s.backward(np.array([[1.0, 5.0, -1.0]]))
    assert np.isfinite(x.grad).all()
    assert x.grad[0, 1] == 0.0


def test_shared_node_accumulates():
    x = ad.Tensor(np.array([2.0]))
    y = x * x + x
    y.backward(np.array([1.0]))
    assert x.grad[0] == 5.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.lists(st.sampled_from(["gelu", "ln", "mm", "sm", "add"]), min_size=1, max_size=4))
def test_random_graphs(seed, ops):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(3, 3))

    def fn(a, b):
        h = a
        for op in ops:
            if op == "gelu":
                h = ad.gelu(h)
            elif op == "ln":
                h = ad.layernorm(h)
            elif op == "mm":
                h = h @ w
            elif op == "sm":
                h = ad.softmax(h, axis=-1) * b
            else:
                h = h + b
        return h

    fd_check(fn, [(4, 3), (4, 3)], seed=seed)
