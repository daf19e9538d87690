"""Tape-based reverse-mode automatic differentiation on numpy arrays.

Every operation on a :class:`Tensor` that has at least one input requiring
gradients records its parents and a closure mapping the output gradient to
one gradient per parent. :func:`gradient` walks that record in reverse
topological order. All data is float64.
"""
from __future__ import annotations

import threading
import warnings
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording for the current thread."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class ShapeError(ValueError):
    """Raised when an op receives operands of incompatible shape.

    ``node`` names the op (and the tensor name when one was given) so the
    offending step of a larger graph can be located.
    """

    def __init__(self, node: str, message: str):
        self.node = node
        super().__init__(f"[{node}] {message}")


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "name")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.op = "leaf"
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable leaf."""
        leaves = [n for n in _topo_order(self) if not n._parents and n.requires_grad]
        grads = gradient(self, leaves, warn_unreachable=False)
        for leaf, g in zip(leaves, grads):
            leaf.grad = g if leaf.grad is None else leaf.grad + g

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.op = op
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _topo_order(root: Tensor) -> list[Tensor]:
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
    return order


def gradient(loss: Tensor, wrt: Iterable[Tensor], warn_unreachable: bool = True) -> list[np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to each tensor in ``wrt``.

    Tensors in ``wrt`` that the loss does not depend on receive a zero
    array (and a ``RuntimeWarning`` unless ``warn_unreachable`` is off).
    """
    wrt = list(wrt)
    if loss.data.size != 1:
        raise ShapeError(loss.op, f"gradient needs a scalar loss, got shape {loss.shape}")
    keep = {id(t) for t in wrt}
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    if loss.requires_grad:
        for node in reversed(_topo_order(loss)):
            g = grads.get(id(node)) if id(node) in keep else grads.pop(id(node), None)
            if g is None or node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pg = _unbroadcast(pg, parent.data.shape)
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg
    out = []
    for t in wrt:
        g = grads.get(id(t))
        if g is None:
            if warn_unreachable and t is not loss:
                warnings.warn(f"tensor {t.name or t.op} is not reachable from the loss; gradient is zero",
                              RuntimeWarning, stacklevel=2)
            g = np.zeros_like(t.data)
        out.append(np.array(g, dtype=np.float64, copy=True).reshape(t.data.shape))
    return out


# -- elementwise arithmetic ------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeError("add", f"{a.shape} vs {b.shape}") from exc
    return _make(data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError as exc:
        raise ShapeError("sub", f"{a.shape} vs {b.shape}") from exc
    return _make(data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeError("mul", f"{a.shape} vs {b.shape}") from exc
    return _make(data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data / b.data
    except ValueError as exc:
        raise ShapeError("div", f"{a.shape} vs {b.shape}") from exc
    return _make(data, (a, b), lambda g: (g / b.data, -g * data / b.data), "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    data = a.data ** exponent
    return _make(data, (a,), lambda g: (g * exponent * a.data ** (exponent - 1),), "pow")


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    data = np.sqrt(a.data)
    return _make(data, (a,), lambda g: (0.5 * g / data,), "sqrt")


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)
    return _make(data, (a,), lambda g: (g * data,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def abs_(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes only where the input is inside the range."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clip")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a) -> Tensor:
    """Tanh approximation of GELU."""
    a = as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    th = np.tanh(inner)
    data = 0.5 * x * (1.0 + th)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
        return (g * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th ** 2) * dinner),)

    return _make(data, (a,), backward, "gelu")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    data = np.empty_like(a.data)
    pos = a.data >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    e = np.exp(a.data[~pos])
    data[~pos] = e / (1.0 + e)
    return _make(data, (a,), lambda g: (g * data * (1.0 - data),), "sigmoid")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)
    return _make(data, (a,), lambda g: (g * (1.0 - data ** 2),), "tanh")


def stop_gradient(a) -> Tensor:
    """Forward identity, backward zero: the ``sg(.)`` operator."""
    a = as_tensor(a)
    out = Tensor(a.data)
    out.op = "stop_gradient"
    return out


# -- reductions and shape ops ---------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)
    axes = _norm_axes(axis, a.ndim)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape),)

    return _make(np.asarray(data), (a,), backward, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    n = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    data = a.data.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / n, a.shape),)

    return _make(np.asarray(data), (a,), backward, "mean")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError("reshape", f"cannot reshape {a.shape} to {shape}") from exc
    return _make(data, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    data = np.transpose(a.data, axes)
    inv = None if axes is None else tuple(np.argsort(axes))
    return _make(data, (a,), lambda g: (np.transpose(g, inv),), "transpose")


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = as_tensor(a)
    axes = list(range(a.ndim))
    axes[ax1], axes[ax2] = axes[ax2], axes[ax1]
    return transpose(a, tuple(axes))


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, slice, type(None), type(Ellipsis))) for i in items)


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    if isinstance(index, Tensor):
        index = index.data.astype(np.int64)
    data = a.data[index]
    basic = _is_basic_index(index)

    def backward(g):
        out = np.zeros_like(a.data)
        if basic:
            out[index] += g
        else:
            np.add.at(out, index, g)
        return (out,)

    return _make(np.asarray(data), (a,), backward, "getitem")


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError("concat", f"shapes {[t.shape for t in tensors]} along axis {axis}") from exc
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
                     for i in range(len(tensors)))

    return _make(data, tensors, backward, "concat")


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError("stack", f"shapes {[t.shape for t in tensors]}") from exc

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(data, tensors, backward, "stack")


def embedding(table, indices) -> Tensor:
    """Gather rows of ``table`` (K, C) at integer ``indices`` (any shape)."""
    table = as_tensor(table)
    idx = np.asarray(indices.data if isinstance(indices, Tensor) else indices, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError("embedding", f"table must be 2-D, got {table.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError("embedding", f"index out of range for table with {table.shape[0]} rows")
    data = table.data[idx]

    def backward(g):
        out = np.zeros_like(table.data)
        np.add.at(out, idx.reshape(-1), g.reshape(-1, table.shape[1]))
        return (out,)

    return _make(data, (table,), backward, "embedding")


# -- linear algebra ---------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul", f"operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", f"inner dimensions differ: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        return g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g

    return _make(data, (a, b), backward, "matmul")


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (data * (g - (g * data).sum(axis=axis, keepdims=True)),)

    return _make(data, (a,), backward, "softmax")


def layer_norm(a, weight=None, bias=None, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale and shift."""
    a = as_tensor(a)
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def backward(g):
        n = a.shape[-1]
        gx = g
        if weight is not None:
            gx = g * weight.data
        gxa = inv * (gx - gx.sum(-1, keepdims=True) / n - xhat * (gx * xhat).sum(-1, keepdims=True) / n)
        grads = [gxa]
        if weight is not None:
            grads.append(g * xhat)
        if bias is not None:
            grads.append(g)
        return tuple(grads)

    parents = [a]
    data = xhat
    if weight is not None:
        weight = as_tensor(weight)
        parents.append(weight)
        data = data * weight.data
    if bias is not None:
        bias = as_tensor(bias)
        parents.append(bias)
        data = data + bias.data
    return _make(data, parents, backward, "layer_norm")


def conv1d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Temporal convolution in (time, channels) layout.

    ``x`` is (T, Cin) or (B, T, Cin); ``weight`` is (K, Cin, Cout).
    """
    x, weight = as_tensor(x), as_tensor(weight)
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or weight.ndim != 3 or xd.shape[2] != weight.shape[1]:
        raise ShapeError("conv1d", f"input {x.shape} incompatible with kernel {weight.shape}")
    B, T, Cin = xd.shape
    K, _, Cout = weight.shape
    Tp = T + 2 * padding
    if Tp < K:
        raise ShapeError("conv1d", f"padded length {Tp} shorter than kernel {K}")
    T_out = (Tp - K) // stride + 1
    xp = np.pad(xd, ((0, 0), (padding, padding), (0, 0))) if padding else xd
    win = np.lib.stride_tricks.sliding_window_view(xp, K, axis=1)[:, ::stride][:, :T_out]
    cols = np.ascontiguousarray(np.swapaxes(win, 2, 3)).reshape(B * T_out, K * Cin)
    w2 = weight.data.reshape(K * Cin, Cout)
    out = (cols @ w2).reshape(B, T_out, Cout)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
        parents.append(bias)

    def backward(g):
        g2 = g.reshape(B * T_out, Cout)
        gw = (cols.T @ g2).reshape(K, Cin, Cout)
        gcols = (g2 @ w2.T).reshape(B, T_out, K, Cin)
        gxp = np.zeros((B, Tp, Cin))
        span = stride * (T_out - 1) + 1
        for k in range(K):
            gxp[:, k:k + span:stride] += gcols[:, :, k]
        gx = gxp[:, padding:padding + T] if padding else gxp
        if squeeze:
            gx = gx[0]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    return _make(out[0] if squeeze else out, parents, backward, "conv1d")


def conv_transpose1d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed temporal convolution; output length (T-1)*stride - 2*padding + K.

    ``x`` is (T, Cin) or (B, T, Cin); ``weight`` is (K, Cin, Cout).
    """
    x, weight = as_tensor(x), as_tensor(weight)
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or weight.ndim != 3 or xd.shape[2] != weight.shape[1]:
        raise ShapeError("conv_transpose1d", f"input {x.shape} incompatible with kernel {weight.shape}")
    B, T, Cin = xd.shape
    K, _, Cout = weight.shape
    full_len = (T - 1) * stride + K
    T_out = full_len - 2 * padding
    if T_out <= 0:
        raise ShapeError("conv_transpose1d", f"non-positive output length {T_out}")
    span = stride * (T - 1) + 1
    full = np.zeros((B, full_len, Cout))
    for k in range(K):
        full[:, k:k + span:stride] += xd @ weight.data[k]
    out = full[:, padding:padding + T_out]
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
        parents.append(bias)

    def backward(g):
        gfull = np.zeros((B, full_len, Cout))
        gfull[:, padding:padding + T_out] = g
        gx = np.zeros_like(xd)
        gw = np.empty_like(weight.data)
        x2 = xd.reshape(B * T, Cin)
        for k in range(K):
            gk = gfull[:, k:k + span:stride]
            gx += gk @ weight.data[k].T
            gw[k] = x2.T @ gk.reshape(B * T, Cout)
        grads = [gx[0] if squeeze else gx, gw]
        if bias is not None:
            grads.append(g.reshape(-1, Cout).sum(axis=0))
        return tuple(grads)

    return _make(out[0] if squeeze else out, parents, backward, "conv_transpose1d")
