"""Dense float64 tensors with tape-based reverse-mode differentiation."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

EPS_LOG = 1e-12


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    """A numpy array plus the closure that propagates its gradient to parents."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("non-finite value produced")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if self.data.size != 1:
            raise ValueError(f"backward needs a scalar root, got shape {self.shape}")
        if self._consumed:
            raise RuntimeError("backward already ran on this graph; rebuild it first")
        self._consumed = True
        if not self.requires_grad:
            return
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            stack.extend((p, False) for p in node._parents if p.requires_grad)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            return scale(self, 1.0 / other)
        return NotImplemented

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """Trainable leaf tensor."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)
        self.name = name

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = np.add(a.data, b.data)
    except ValueError as exc:
        raise ValueError(f"add: incompatible shapes {a.shape} and {b.shape}") from exc
    return Tensor(out, _parents=(a, b),
                  _backward=lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a) -> Tensor:
    return Tensor(-a.data, _parents=(a,), _backward=lambda g: (-g,))


def mul(a, b) -> Tensor:
    """Elementwise product (shapes must match exactly)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"mul: shape mismatch {a.shape} vs {b.shape}")
    return Tensor(a.data * b.data, _parents=(a, b),
                  _backward=lambda g: (g * b.data, g * a.data))


def scale(a, c: float) -> Tensor:
    c = float(c)
    return Tensor(a.data * c, _parents=(a,), _backward=lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    return Tensor(a.data @ b.data, _parents=(a, b),
                  _backward=lambda g: (g @ b.data.T, a.data.T @ g))


def spmm(A, b) -> Tensor:
    """Constant sparse (or dense) matrix times a tensor."""
    b = _as_tensor(b)
    if A.shape[1] != b.shape[0]:
        raise ValueError(f"spmm: incompatible shapes {A.shape} @ {b.shape}")
    At = A.T.tocsr() if sp.issparse(A) else np.asarray(A).T
    out = A @ b.data
    return Tensor(np.asarray(out), _parents=(b,), _backward=lambda g: (np.asarray(At @ g),))


def relu(a) -> Tensor:
    mask = a.data > 0
    return Tensor(a.data * mask, _parents=(a,), _backward=lambda g: (g * mask,))


def softmax(a) -> Tensor:
    """Row-wise softmax of a 2-D tensor."""
    if a.ndim != 2:
        raise ValueError("softmax expects a 2-D tensor")
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return Tensor(p, _parents=(a,), _backward=back)


def log(a, eps: float = EPS_LOG) -> Tensor:
    """Natural log clamped from below at ``eps``."""
    clipped = np.maximum(a.data, eps)
    live = a.data > eps
    return Tensor(np.log(clipped), _parents=(a,), _backward=lambda g: (g * live / clipped,))


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ValueError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from exc
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def back(g):
        return tuple(np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds, bounds[1:]))

    return Tensor(out, _parents=tuple(tensors), _backward=back)


def sum_(a, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor(out, _parents=(a,), _backward=back)


def mean(a, axis=None, keepdims=False) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return scale(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def transpose(a) -> Tensor:
    return Tensor(a.data.T, _parents=(a,), _backward=lambda g: (g.T,))


def reshape(a, shape) -> Tensor:
    old = a.shape
    return Tensor(a.data.reshape(shape), _parents=(a,), _backward=lambda g: (g.reshape(old),))


def take_rows(a, idx, padding_idx: int | None = None) -> Tensor:
    """Gather rows ``a[idx]``; rows equal to ``padding_idx`` receive no gradient."""
    idx = np.asarray(idx, dtype=np.int64)

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        if padding_idx is not None:
            full[padding_idx] = 0.0
        return (full,)

    return Tensor(a.data[idx], _parents=(a,), _backward=back)


def weighted_row_sum(w, v) -> Tensor:
    """For ``w`` of shape (B, T) and ``v`` of shape (B*T, k), return (B, k)
    with row b equal to sum_t w[b, t] * v[b*T + t]."""
    B, T = w.shape
    if v.ndim != 2 or v.shape[0] != B * T:
        raise ValueError(f"weighted_row_sum: {w.shape} vs {v.shape}")
    v3 = v.data.reshape(B, T, -1)
    out = np.einsum("bt,btk->bk", w.data, v3)

    def back(g):
        gw = np.einsum("bk,btk->bt", g, v3)
        gv = (w.data[:, :, None] * g[:, None, :]).reshape(B * T, -1)
        return gw, gv

    return Tensor(out, _parents=(w, v), _backward=back)


def cross_entropy(probs, target) -> Tensor:
    """Mean negative log-likelihood of integer targets (or one-hot rows)."""
    p = probs.data
    if p.ndim != 2:
        raise ValueError("cross_entropy expects (batch, classes) probabilities")
    target = np.asarray(target)
    if target.ndim == 2:
        if target.shape != p.shape:
            raise ValueError(f"cross_entropy: target {target.shape} vs probs {p.shape}")
        target = target.argmax(axis=1)
    if target.shape != (p.shape[0],):
        raise ValueError(f"cross_entropy: {len(target)} targets for {p.shape[0]} rows")
    rows = np.arange(p.shape[0])
    picked = p[rows, target]
    clipped = np.maximum(picked, EPS_LOG)
    live = picked > EPS_LOG
    B = p.shape[0]

    def back(g):
        full = np.zeros_like(p)
        full[rows, target] = -g * live / clipped / B
        return (full,)

    return Tensor(-np.log(clipped).mean(), _parents=(probs,), _backward=back)
