"""A small reverse-mode autodiff over numpy arrays.

Each op returns a new ``Tensor`` holding its parents and a closure that
pushes the output gradient back to them. ``backward`` walks the graph in
reverse topological order.
"""
from __future__ import annotations

import math

import numpy as np

_GELU_C = math.sqrt(2.0 / math.pi)


class Tensor:
    __slots__ = ("data", "grad", "_prev", "_back", "name")

    def __init__(self, data, _prev=(), _back=None, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._prev = _prev
        self._back = _back
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}{', ' + self.name if self.name else ''})"

    def _accum(self, g) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad=None) -> None:
        backward([self], [np.ones_like(self.data) if grad is None else grad])

    # operators
    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __truediv__(self, o): return div(self, o)
    def __neg__(self): return mul(self, -1.0)
    def __matmul__(self, o): return matmul(self, o)
    def __getitem__(self, idx): return getitem(self, idx)

    def sum(self, axis=None, keepdims=False): return tsum(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 else shape)
    def transpose(self, *axes): return transpose(self, axes[0] if len(axes) == 1 else axes)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def backward(outputs: list[Tensor], grads: list) -> None:
    """Seed several outputs at once and run one reverse sweep."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(t, False) for t in outputs]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._prev:
            if id(p) not in seen:
                stack.append((p, False))
    pending = {id(t): None for t in order}
    for t, g in zip(outputs, grads):
        g = np.asarray(g, dtype=np.float64)
        pending[id(t)] = g if pending[id(t)] is None else pending[id(t)] + g
    for node in reversed(order):
        g = pending.pop(id(node))
        if g is None:
            continue
        if node._back is None:
            node._accum(g)
            continue
        for parent, pg in zip(node._prev, node._back(g)):
            if pg is None:
                continue
            k = id(parent)
            pending[k] = pg if pending[k] is None else pending[k] + pg


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.data + b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.data - b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.data * b.data, (a, b),
                  lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return Tensor(out, (a, b),
                  lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return Tensor(out, (a,), lambda g: (0.5 * g / out,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    m = a.data > 0
    return Tensor(np.where(m, a.data, 0.0), (a,), lambda g: (g * m,))


def gelu(a) -> Tensor:
    """tanh approximation."""
    a = as_tensor(a)
    x = a.data
    x2 = x * x
    th = np.tanh(_GELU_C * x * (1.0 + 0.044715 * x2))
    out = 0.5 * x * (1.0 + th)

    def back(g):
        dth = (1.0 - th * th) * _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + th) + 0.5 * x * dth),)
    return Tensor(out, (a,), back)


# -- linear algebra and shape ------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if b.data.ndim > 1 else np.multiply.outer(g, b.data)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
    return Tensor(a.data @ b.data, (a, b), back)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)
    return Tensor(a.data.sum(axis=axis, keepdims=keepdims), (a,), back)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis, keepdims), 1.0 / n)


def tmax(a, axis: int) -> Tensor:
    """Max-pool along ``axis``; the gradient goes to the first maximal entry."""
    a = as_tensor(a)
    idx = np.expand_dims(np.argmax(a.data, axis=axis), axis)
    out = np.take_along_axis(a.data, idx, axis=axis).squeeze(axis)

    def back(g):
        ga = np.zeros_like(a.data)
        np.put_along_axis(ga, idx, np.expand_dims(g, axis), axis=axis)
        return (ga,)
    return Tensor(out, (a,), back)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    inv = np.argsort(axes)
    return Tensor(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)

    def back(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)
    return Tensor(a.data[idx], (a,), back)


def concat(tensors, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return Tensor(np.concatenate([t.data for t in ts], axis=axis), tuple(ts),
                  lambda g: tuple(np.split(g, sizes, axis=axis)))


def split(a, sections: int, axis: int = 0) -> list[Tensor]:
    a = as_tensor(a)
    n = a.shape[axis] // sections
    out = []
    for k in range(sections):
        sl = [slice(None)] * a.data.ndim
        sl[axis] = slice(k * n, (k + 1) * n)
        out.append(getitem(a, tuple(sl)))
    return out


def gather_rows(a, idx) -> Tensor:
    """Batched row lookup: ``a`` (B, n, c), ``idx`` (B, ...) -> (B, ..., c)."""
    a = as_tensor(a)
    idx = np.asarray(idx)
    b = np.arange(a.shape[0]).reshape((-1,) + (1,) * (idx.ndim - 1))

    def back(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, (b, idx), g)
        return (ga,)
    return Tensor(a.data[b, idx], (a,), back)


def repeat_rows(a, reps: int) -> Tensor:
    """(B, n, c) -> (B, n*reps, c) with each row repeated ``reps`` times in place."""
    a = as_tensor(a)
    B, n, c = a.shape
    return Tensor(np.repeat(a.data, reps, axis=1), (a,),
                  lambda g: (g.reshape(B, n, reps, c).sum(axis=2),))


def interleave(a, b) -> Tensor:
    """(B, n, c), (B, n, c) -> (B, 2n, c) ordered a0, b0, a1, b1, ..."""
    a, b = as_tensor(a), as_tensor(b)
    B, n, c = a.shape
    out = np.stack([a.data, b.data], axis=2).reshape(B, 2 * n, c)

    def back(g):
        g = g.reshape(B, n, 2, c)
        return g[:, :, 0], g[:, :, 1]
    return Tensor(out, (a, b), back)


# -- normalization and attention helpers ---------------------------------------

def softmax(a, axis: int = -1, mask=None) -> Tensor:
    """Softmax; entries where ``mask`` is False get probability exactly 0."""
    a = as_tensor(a)
    x = a.data if mask is None else np.where(mask, a.data, -np.inf)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    s = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)
    return Tensor(s, (a,), back)


def layernorm(a, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance (no affine part)."""
    a = as_tensor(a)
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    inv = 1.0 / np.sqrt((xc ** 2).mean(axis=-1, keepdims=True) + eps)
    y = xc * inv

    def back(g):
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gy),)
    return Tensor(y, (a,), back)


def normalize(a, eps: float = 1e-12) -> Tensor:
    """Unit length along the last axis, guarded by ``eps``."""
    a = as_tensor(a)
    return div(a, sqrt(add(tsum(mul(a, a), axis=-1, keepdims=True), eps * eps)))
