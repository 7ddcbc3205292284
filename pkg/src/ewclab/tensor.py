"""Dense float64 tensors with reverse-mode automatic differentiation.

Define-by-run: every operation on tensors that require gradients records a
node with a backward closure; ``backward(loss)`` replays the recorded graph
in reverse topological order. Broadcasting is restricted to leading batch
dimensions (the smaller shape must be a suffix of the larger one).
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager

import numpy as np

from .errors import InvalidInputError, ShapeError

_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference paths)."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    """n-dimensional float64 array, optionally tracked by the autodiff graph.

    ``grad`` accumulates across backward passes; callers zero it between
    optimization steps (see :meth:`zero_grad`).
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._op = ""

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise InvalidInputError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, op={self._op!r})"

    # operator sugar; the module-level functions are the primary API
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn, op: str) -> Tensor:
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
        out._op = op
    return out


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order  # parents always precede their consumers


def backward(loss: Tensor):
    """Populate ``grad`` on every reachable requires_grad leaf.

    Leaf gradients accumulate across calls; interior scratch gradients are
    reset on every pass.
    """
    if loss.data.size != 1:
        raise InvalidInputError(f"backward expects a scalar loss, got shape {loss.shape}")
    order = _toposort(loss)
    for node in order:
        if node._parents:
            node.grad = np.zeros(node.data.shape)
        elif node.requires_grad and node.grad is None:
            node.grad = np.zeros(node.data.shape)
    if loss.grad is None:
        loss.grad = np.zeros_like(loss.data)
    loss.grad = loss.grad + np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# factories

def _check_shape(shape):
    dims = list(shape)
    if not dims or any((not isinstance(d, (int, np.integer))) or d < 1 for d in dims):
        raise ShapeError(f"invalid shape {shape!r}: dims must be positive integers")
    return tuple(int(d) for d in dims)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(_check_shape(shape)), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(_check_shape(shape)), requires_grad=requires_grad)


def randn(shape, seed: int, stddev: float = 1.0, requires_grad: bool = False) -> Tensor:
    """Deterministic Gaussian tensor: same seed, same bits."""
    if stddev <= 0:
        raise InvalidInputError(f"stddev must be > 0, got {stddev}")
    rng = np.random.default_rng(seed)
    return Tensor(rng.normal(0.0, stddev, _check_shape(shape)), requires_grad=requires_grad)


# ---------------------------------------------------------------------------
# elementwise with leading-dim broadcasting

def _check_suffix_broadcast(sa: tuple, sb: tuple):
    small, big = (sa, sb) if len(sa) <= len(sb) else (sb, sa)
    if big[len(big) - len(small):] != small:
        raise ShapeError(f"shapes {sa} and {sb} do not broadcast over leading dims")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    return g.sum(axis=tuple(range(g.ndim - len(shape)))).reshape(shape)


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_suffix_broadcast(a.shape, b.shape)

    def bw(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g, a.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_suffix_broadcast(a.shape, b.shape)

    def bw(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g, a.shape)
        if b.requires_grad:
            b.grad -= _unbroadcast(g, b.shape)

    return _node(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_suffix_broadcast(a.shape, b.shape)

    def bw(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g * b.data, a.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), bw, "mul")


def neg(a) -> Tensor:
    a = _lift(a)

    def bw(g):
        if a.requires_grad:
            a.grad -= g

    return _node(-a.data, (a,), bw, "neg")


# ---------------------------------------------------------------------------
# linear algebra and nonlinearities

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product. Either both operands carry equal leading batch dims,
    or ``b`` is a plain 2-D matrix applied to every stacked row block of ``a``."""
    a, b = _lift(a), _lift(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
    stacked_weight = b.data.ndim == 2 and a.data.ndim > 2
    if not stacked_weight and (a.data.ndim != b.data.ndim or a.shape[:-2] != b.shape[:-2]):
        raise ShapeError(f"matmul batch dims must match, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims do not conform: {a.shape} @ {b.shape}")

    def bw(g):
        if a.requires_grad:
            a.grad += g @ np.swapaxes(b.data, -1, -2)
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            if stacked_weight:
                gb = gb.sum(axis=tuple(range(gb.ndim - 2)))
            b.grad += gb

    return _node(a.data @ b.data, (a, b), bw, "matmul")


def relu(a: Tensor) -> Tensor:
    a = _lift(a)
    mask = a.data > 0

    def bw(g):
        if a.requires_grad:
            a.grad += mask * g

    return _node(np.where(mask, a.data, 0.0), (a,), bw, "relu")


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """Tanh-approximation GELU (the BERT-family variant)."""
    a = _lift(a)
    x = a.data
    x2 = x * x
    t = np.tanh(_GELU_C * (x + 0.044715 * (x * x2)))

    def bw(g):
        if a.requires_grad:
            d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 0.134145 * x2)
            a.grad += d * g

    return _node(0.5 * x * (1.0 + t), (a,), bw, "gelu")


def log(a: Tensor) -> Tensor:
    a = _lift(a)

    def bw(g):
        if a.requires_grad:
            a.grad += g / a.data

    return _node(np.log(a.data), (a,), bw, "log")


def tsum(a: Tensor) -> Tensor:
    a = _lift(a)

    def bw(g):
        if a.requires_grad:
            a.grad += np.broadcast_to(g, a.shape)

    return _node(np.asarray(a.data.sum()), (a,), bw, "sum")


def tmean(a: Tensor) -> Tensor:
    a = _lift(a)
    n = a.data.size

    def bw(g):
        if a.requires_grad:
            a.grad += np.broadcast_to(g / n, a.shape)

    return _node(np.asarray(a.data.mean()), (a,), bw, "mean")


def reshape(a: Tensor, shape) -> Tensor:
    a = _lift(a)
    shape = tuple(int(d) for d in shape)
    if int(np.prod(shape)) != a.data.size:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}")

    def bw(g):
        if a.requires_grad:
            a.grad += g.reshape(a.shape)

    return _node(a.data.reshape(shape), (a,), bw, "reshape")


def transpose(a: Tensor, axes) -> Tensor:
    a = _lift(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bw(g):
        if a.requires_grad:
            a.grad += g.transpose(inv)

    return _node(a.data.transpose(axes), (a,), bw, "transpose")


def gather_rows(a: Tensor, idxs) -> Tensor:
    """Select rows along the first axis; gradient scatters back."""
    a = _lift(a)
    idxs = np.asarray(idxs, dtype=np.intp)
    if idxs.ndim != 1:
        raise InvalidInputError("gather_rows expects a 1-D index list")
    if idxs.size and (idxs.min() < 0 or idxs.max() >= a.shape[0]):
        raise InvalidInputError(f"row index out of range for first dim {a.shape[0]}")

    def bw(g):
        if a.requires_grad:
            np.add.at(a.grad, idxs, g)

    return _node(a.data[idxs], (a,), bw, "gather_rows")


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise InvalidInputError(f"token id out of range for table of {table.shape[0]} rows")
    return gather_rows(table, ids)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = _lift(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        if a.requires_grad:
            a.grad += (g - (g * s).sum(axis=axis, keepdims=True)) * s

    return _node(s, (a,), bw, "softmax")


def layernorm(a: Tensor, gain: Tensor, bias: Tensor, axis: int = -1, eps: float = 1e-5) -> Tensor:
    if eps <= 0:
        raise InvalidInputError(f"layernorm eps must be > 0, got {eps}")
    a, gain, bias = _lift(a), _lift(gain), _lift(bias)
    n = a.shape[axis]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError(f"gain/bias must have shape ({n},) for axis {axis}")
    bshape = [1] * a.data.ndim
    bshape[axis] = n

    mu = a.data.mean(axis=axis, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gb = gain.data.reshape(bshape)

    def bw(g):
        red = tuple(i for i in range(g.ndim) if i != axis % g.ndim)
        if gain.requires_grad:
            gain.grad += (g * xhat).sum(axis=red)
        if bias.requires_grad:
            bias.grad += g.sum(axis=red)
        if a.requires_grad:
            dxhat = g * gb
            m1 = dxhat.mean(axis=axis, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=axis, keepdims=True)
            a.grad += inv * (dxhat - m1 - xhat * m2)

    return _node(xhat * gb + bias.data.reshape(bshape), (a, gain, bias), bw, "layernorm")


def cross_entropy(logits: Tensor, target_ids) -> Tensor:
    """Mean negative log-likelihood of the targets under row-wise softmax."""
    logits = _lift(logits)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy expects (rows, vocab) logits, got {logits.shape}")
    targets = np.asarray(target_ids, dtype=np.intp)
    m, v = logits.shape
    if targets.ndim != 1 or targets.size != m:
        raise InvalidInputError(f"expected {m} target ids, got {targets.shape}")
    if m == 0:
        raise InvalidInputError("cross_entropy over zero rows is undefined")
    if targets.min() < 0 or targets.max() >= v:
        raise InvalidInputError(f"target id out of range for vocab of {v}")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    nll = lse[:, 0] - z[np.arange(m), targets]

    def bw(g):
        if logits.requires_grad:
            p = np.exp(z - lse)
            p[np.arange(m), targets] -= 1.0
            logits.grad += (g / m) * p

    return _node(np.asarray(nll.mean()), (logits,), bw, "cross_entropy")
