"""Dense float64 tensors with a dynamic reverse-mode tape.

Operations are recorded on the innermost active :class:`Graph` (entered with
``with Graph() as g:``) whenever at least one operand requires a gradient.
Outside any graph, or inside :func:`no_grad`, operations just compute values,
which is what inference paths use.

    >>> w = Tensor([1.0, 2.0], requires_grad=True)
    >>> with Graph() as g:
    ...     loss = dot(w, w)
    >>> g.backward(loss)
    >>> w.grad
    array([2., 4.])
"""

from __future__ import annotations

import contextlib
import math
import threading
from collections.abc import Callable, Sequence

import numpy as np

from . import kernels
from .errors import ContractError, DimensionError, StateError

_local = threading.local()


def _stack():
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_graph():
    """The graph operations are currently recorded on, or None."""
    stack = _stack()
    return stack[-1] if stack else None


@contextlib.contextmanager
def no_grad():
    """Suspend recording, e.g. to evaluate a function for finite differences."""
    stack = _stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


class Tensor:
    """A float64 array with an optional gradient of the same shape."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def _wrap(cls, arr, requires_grad=False):
        t = cls.__new__(cls)
        t.data = arr
        t.grad = None
        t.requires_grad = requires_grad
        t.name = None
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else None

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.data)))

    def detach(self):
        return Tensor._wrap(self.data)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Node:
    __slots__ = ("kind", "inputs", "output", "backward")

    def __init__(self, kind, inputs, output, backward):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Graph:
    """Ordered record of operations for one forward pass.

    The backward pass walks the record in exact reverse order.  A graph can be
    differentiated once; call :meth:`reset` to reuse it.
    """

    def __init__(self):
        self._nodes = []
        self._done = False

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self):
        return len(self._nodes)

    @property
    def nodes(self):
        return tuple(self._nodes)

    def reset(self):
        self._nodes = []
        self._done = False

    def record(self, kind, inputs, out_arr, backward):
        if self._done:
            raise StateError("graph was already differentiated; reset() before recording")
        out = Tensor._wrap(out_arr, requires_grad=True)
        self._nodes.append(Node(kind, inputs, out, backward))
        return out

    def backward(self, loss, params=()):
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

        Tensors listed in ``params`` get a zero gradient when unreachable.
        """
        if self._done:
            raise StateError("backward() already ran on this graph; call reset() first")
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        self._done = True
        grads = {id(loss): (loss, np.ones_like(loss.data))}
        for node in reversed(self._nodes):
            entry = grads.pop(id(node.output), None)
            if entry is None:
                continue
            in_grads = node.backward(entry[1])
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                prev = grads.get(key)
                grads[key] = (t, gi if prev is None else prev[1] + gi)
        for t, g in grads.values():
            if t.grad is None:
                t.grad = np.array(g, dtype=np.float64).reshape(t.shape)
            else:
                t.grad = t.grad + g
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


def backward(graph, loss, params=()):
    graph.backward(loss, params)


def _op(kind, inputs, out_arr, backward):
    g = active_graph()
    if g is None:
        return Tensor._wrap(out_arr)
    for t in inputs:
        if t.requires_grad:
            return g.record(kind, inputs, out_arr, backward)
    return Tensor._wrap(out_arr)


def _same_shape(name, a, b):
    if a.shape != b.shape:
        raise DimensionError(f"{name}: shape {a.shape} does not match {b.shape}")


# -- linear algebra ---------------------------------------------------------

def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    A, B = a.data, b.data
    return _op("matmul", (a, b), A @ B, lambda g: (g @ B.T, A.T @ g))


def transpose(x):
    if x.data.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got {x.shape}")
    return _op("transpose", (x,), x.data.T.copy(), lambda g: (g.T,))


def dot(a, b):
    if a.data.ndim != 1:
        raise DimensionError(f"dot expects vectors, got {a.shape}")
    _same_shape("dot", a, b)
    A, B = a.data, b.data
    return _op("dot", (a, b), np.asarray(A @ B), lambda g: (g * B, g * A))


def diag(x):
    if x.data.ndim != 2 or x.shape[0] != x.shape[1]:
        raise DimensionError(f"diag expects a square matrix, got {x.shape}")
    n = x.shape[0]

    def bw(g):
        out = np.zeros((n, n))
        out[np.arange(n), np.arange(n)] = g
        return (out,)

    return _op("diag", (x,), np.diagonal(x.data).copy(), bw)


# -- elementwise ------------------------------------------------------------

def add(a, b):
    _same_shape("add", a, b)
    return _op("add", (a, b), a.data + b.data, lambda g: (g, g))


def sub(a, b):
    _same_shape("sub", a, b)
    return _op("sub", (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a, b):
    _same_shape("mul", a, b)
    A, B = a.data, b.data
    return _op("mul", (a, b), A * B, lambda g: (g * B, g * A))


def add_bias(x, b):
    """``x + b`` with ``b`` broadcast along the last axis."""
    if b.data.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise DimensionError(f"add_bias: bias {b.shape} does not fit {x.shape}")
    k = b.shape[0]
    return _op("add_bias", (x, b), x.data + b.data, lambda g: (g, g.reshape(-1, k).sum(axis=0)))


def scale(x, c):
    c = float(c)
    return _op("scale", (x,), x.data * c, lambda g: (g * c,))


def add_scalar(x, c):
    return _op("add_scalar", (x,), x.data + float(c), lambda g: (g,))


def mul_const(x, arr):
    """Multiply by a constant array that broadcasts to ``x.shape``."""
    arr = np.asarray(arr, dtype=np.float64)
    if np.broadcast_shapes(arr.shape, x.shape) != x.shape:
        raise DimensionError(f"mul_const: {arr.shape} does not broadcast to {x.shape}")
    return _op("mul_const", (x,), x.data * arr, lambda g: (g * arr,))


def _sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x):
    s = _sigmoid(x.data)
    return _op("sigmoid", (x,), s, lambda g: (g * s * (1.0 - s),))


def tanh(x):
    t = np.tanh(x.data)
    return _op("tanh", (x,), t, lambda g: (g * (1.0 - t * t),))


def relu_hinge(x):
    """``max(0, x)``; the subgradient at exactly 0 is taken as 0."""
    active = x.data > 0
    return _op("relu_hinge", (x,), np.where(active, x.data, 0.0), lambda g: (g * active,))


def exp(x):
    e = np.exp(x.data)
    return _op("exp", (x,), e, lambda g: (g * e,))


def log(x):
    X = x.data
    return _op("log", (x,), np.log(X), lambda g: (g / X,))


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "relu_hinge": relu_hinge,
}


def elementwise(op, *args):
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}; expected one of {sorted(_ELEMENTWISE)}")
    return fn(*args)


# -- reductions and normalizers ---------------------------------------------

def sum(x):  # noqa: A001 - mirrors numpy naming
    shape = x.shape
    return _op("sum", (x,), np.asarray(x.data.sum()), lambda g: (np.broadcast_to(g, shape).copy(),))


def sum_axis(x, axis):
    shape = x.shape

    def bw(g):
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _op("sum_axis", (x,), x.data.sum(axis=axis), bw)


def softmax(x):
    """Softmax over the last axis, computed with max subtraction."""
    if x.data.ndim == 0 or x.shape[-1] == 0:
        raise DimensionError("softmax of an empty vector")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)
    return _op("softmax", (x,), s, lambda g: (s * (g - (g * s).sum(axis=-1, keepdims=True)),))


def log_softmax(x):
    if x.data.ndim == 0 or x.shape[-1] == 0:
        raise DimensionError("log_softmax of an empty vector")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse

    def bw(g):
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

    return _op("log_softmax", (x,), out, bw)


# -- indexing and reshaping -------------------------------------------------

def gather_rows(table, ids, mask=None):
    """Rows ``table[ids]``, optionally zeroed where ``mask`` is 0."""
    ids = np.asarray(ids, dtype=np.int64)
    out = table.data[ids]
    m = None
    if mask is not None:
        m = np.asarray(mask, dtype=np.float64).reshape(ids.shape + (1,))
        out = out * m
    rows = table.shape[0]

    def bw(g):
        gt = np.zeros((rows,) + table.shape[1:])
        np.add.at(gt, ids, g if m is None else g * m)
        return (gt,)

    return _op("gather_rows", (table,), out, bw)


def pick(x, ids):
    """``x[..., ids]`` along the last axis, one id per leading index."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.shape != x.shape[:-1]:
        raise DimensionError(f"pick: ids {ids.shape} do not match {x.shape}")
    idx = ids[..., None]
    out = np.take_along_axis(x.data, idx, axis=-1)[..., 0]
    shape = x.shape

    def bw(g):
        gx = np.zeros(shape)
        np.put_along_axis(gx, idx, g[..., None], axis=-1)
        return (gx,)

    return _op("pick", (x,), out, bw)


def stack(tensors):
    tensors = tuple(tensors)
    if not tensors:
        raise DimensionError("stack of an empty list")
    shape = tensors[0].shape
    for t in tensors:
        _same_shape("stack", tensors[0], t)
    return _op("stack", tensors, np.stack([t.data for t in tensors]), lambda g: tuple(g))


def reshape(x, shape):
    old = x.shape
    return _op("reshape", (x,), x.data.reshape(shape).copy(), lambda g: (g.reshape(old),))


def concat_last(a, b):
    if a.shape[:-1] != b.shape[:-1]:
        raise DimensionError(f"concat_last: {a.shape} vs {b.shape}")
    k = a.shape[-1]
    return _op("concat_last", (a, b), np.concatenate([a.data, b.data], axis=-1),
               lambda g: (g[..., :k], g[..., k:]))


def index0(x, i):
    """``x[i]`` along the first axis."""
    shape = x.shape

    def bw(g):
        gx = np.zeros(shape)
        gx[i] = g
        return (gx,)

    return _op("index0", (x,), x.data[i].copy(), bw)


def slice_rows(x, start, stop):
    shape = x.shape

    def bw(g):
        gx = np.zeros(shape)
        gx[start:stop] = g
        return (gx,)

    return _op("slice_rows", (x,), x.data[start:stop].copy(), bw)


def slice_last(x, start, stop):
    shape = x.shape

    def bw(g):
        gx = np.zeros(shape)
        gx[..., start:stop] = g
        return (gx,)

    return _op("slice_last", (x,), np.ascontiguousarray(x.data[..., start:stop]), bw)


def sub_col(s, v):
    """``s - v[:, None]`` for a matrix ``s`` and a vector ``v``."""
    if s.data.ndim != 2 or v.data.ndim != 1 or v.shape[0] != s.shape[0]:
        raise DimensionError(f"sub_col: {s.shape} minus column {v.shape}")
    return _op("sub_col", (s, v), s.data - v.data[:, None], lambda g: (g, -g.sum(axis=1)))


# -- fused recurrent cell ---------------------------------------------------

def lstm_cell(z, c_prev, h_prev, mask=None):
    """Pointwise LSTM stage on pre-activations ``z = [i|f|g|o]``.

    Returns ``[h | c]`` packed along the last axis.  Rows with mask 0 pass
    ``(h_prev, c_prev)`` through unchanged.
    """
    n, d = c_prev.shape
    if z.shape != (n, 4 * d) or h_prev.shape != (n, d):
        raise DimensionError(f"lstm_cell: z {z.shape}, c {c_prev.shape}, h {h_prev.shape}")
    m = np.ones(n, dtype=np.uint8) if mask is None else np.ascontiguousarray(mask, dtype=np.uint8)
    out, cache = kernels.lstm_forward(
        np.ascontiguousarray(z.data), np.ascontiguousarray(c_prev.data),
        np.ascontiguousarray(h_prev.data), m)

    def bw(g):
        dz, dc, dh = kernels.lstm_backward(np.ascontiguousarray(g), cache)
        return dz, dc, dh

    return _op("lstm_cell", (z, c_prev, h_prev), out, bw)


# -- gradient checking ------------------------------------------------------

def check_gradient(f: Callable, x, eps: float = 1e-6) -> float:
    """Largest relative gap between the tape gradient and central differences.

    ``f`` maps ``x`` (a Tensor, or a sequence of Tensors passed as one list)
    to a scalar Tensor.  The error per coordinate is
    ``|analytic - numeric| / max(1e-8, |analytic| + |numeric|)``.
    """
    if eps <= 0:
        raise ContractError("eps must be positive")
    many = isinstance(x, Sequence) and not isinstance(x, Tensor)
    xs = list(x) if many else [x]
    arg = xs if many else x
    saved = [(t.requires_grad, t.grad) for t in xs]
    for t in xs:
        t.requires_grad = True
        t.grad = None
    try:
        with Graph() as g:
            y = f(arg)
        g.backward(y, xs)
        analytic = [t.grad.copy() for t in xs]
        worst = 0.0
        with no_grad():
            for t, a in zip(xs, analytic):
                flat = t.data.reshape(-1)
                af = a.reshape(-1)
                for i in range(flat.size):
                    orig = flat[i]
                    flat[i] = orig + eps
                    fp = float(f(arg).data)
                    flat[i] = orig - eps
                    fm = float(f(arg).data)
                    flat[i] = orig
                    num = (fp - fm) / (2.0 * eps)
                    err = abs(af[i] - num) / max(1e-8, abs(af[i]) + abs(num))
                    if not math.isfinite(err):
                        return math.inf
                    worst = max(worst, err)
        return worst
    finally:
        for t, (rg, gr) in zip(xs, saved):
            t.requires_grad = rg
            t.grad = gr
