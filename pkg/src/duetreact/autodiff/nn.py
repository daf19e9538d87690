"""Layers built from the differentiable primitives in :mod:`.tensor`."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as F
from .tensor import Tensor


class Parameter(Tensor):
    """A trainable leaf tensor."""

    __slots__ = ()

    def __init__(self, data, name: str | None = None):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True, name=name)


class Module:
    """Minimal container that discovers parameters through its attributes.

    Attribute order defines parameter order, which in turn fixes the
    checkpoint layout and the optimizer's reduction order.
    """

    training = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, value in vars(self).items():
            yield from _walk(value, f"{prefix}{key}")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, dict, str]]:
        """Non-trainable arrays kept in a ``stats`` dict on any submodule."""
        for key, value in vars(self).items():
            if key == "stats" and isinstance(value, dict):
                for k in value:
                    yield f"{prefix}stats.{k}", value, k
            else:
                for sub, name in _submodules(value, f"{prefix}{key}"):
                    yield from sub.named_buffers(prefix=name + ".")

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: np.array(d[k], dtype=np.float64) for name, d, k in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        own = dict(self.named_parameters())
        bufs = {name: (d, k) for name, d, k in self.named_buffers()}
        if strict:
            missing = (set(own) | set(bufs)) - set(state)
            unexpected = set(state) - set(own) - set(bufs)
            if missing or unexpected:
                raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in own.items():
            if name not in state:
                continue
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise F.ShapeError(name, f"checkpoint shape {value.shape} != parameter shape {p.shape}")
            p.data = value.copy()
        for name, (d, k) in bufs.items():
            if name in state:
                d[k] = np.array(state[name], dtype=np.float64)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


def _walk(value, name):
    if isinstance(value, Parameter):
        yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(prefix=name + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}")
    elif isinstance(value, dict):
        for key, item in value.items():
            yield from _walk(item, f"{name}.{key}")


def _submodules(value, name):
    if isinstance(value, Module):
        yield value, name
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _submodules(item, f"{name}.{i}")
    elif isinstance(value, dict):
        for key, item in value.items():
            yield from _submodules(item, f"{name}.{key}")


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True, zero: bool = False):
        self.weight = Parameter(np.zeros((in_dim, out_dim)) if zero else _uniform(rng, in_dim, (in_dim, out_dim)))
        self.bias = Parameter(np.zeros(out_dim)) if bias else None

    def forward(self, x):
        y = F.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class Conv1d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0, zero: bool = False):
        shape = (kernel, in_ch, out_ch)
        self.weight = Parameter(np.zeros(shape) if zero else _uniform(rng, kernel * in_ch, shape))
        self.bias = Parameter(np.zeros(out_ch))
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        return F.conv1d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose1d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0, zero: bool = False):
        shape = (kernel, in_ch, out_ch)
        fan_in = max(1, kernel * in_ch // max(stride, 1))
        self.weight = Parameter(np.zeros(shape) if zero else _uniform(rng, fan_in, shape))
        self.bias = Parameter(np.zeros(out_ch))
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        return F.conv_transpose1d(x, self.weight, self.bias, self.stride, self.padding)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.weight = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x):
        return F.layer_norm(x, self.weight, self.bias, self.eps)


class MultiHeadAttention(Module):
    """Scaled dot-product self-attention over the time axis of (B, T, D)."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise ValueError(f"model dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.q = Linear(dim, dim, rng)
        # a key bias shifts every score in a row equally, so softmax ignores it
        self.k = Linear(dim, dim, rng, bias=False)
        self.v = Linear(dim, dim, rng)
        self.proj = Linear(dim, dim, rng)

    def forward(self, x, mask: np.ndarray | None = None):
        squeeze = x.ndim == 2
        if squeeze:
            x = F.reshape(x, (1,) + x.shape)
        B, T, D = x.shape
        H, dh = self.heads, D // self.heads
        q, k, v = (F.transpose(F.reshape(lin(x), (B, T, H, dh)), (0, 2, 1, 3))
                   for lin in (self.q, self.k, self.v))  # (B, H, T, dh)
        scores = F.matmul(q, F.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(dh))
        if mask is not None:
            # mask: (B, T) True for valid key positions
            scores = scores + np.where(mask[:, None, None, :], 0.0, -1e9)
        attn = F.softmax(scores, axis=-1)
        out = F.matmul(attn, v)  # (B, H, T, dh)
        out = F.reshape(F.transpose(out, (0, 2, 1, 3)), (B, T, D))
        out = self.proj(out)
        return F.reshape(out, (T, D)) if squeeze else out


class TransformerBlock(Module):
    """Pre-norm encoder block: attention then a GELU feed-forward."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, mlp_ratio: int = 2):
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.fc1 = Linear(dim, mlp_ratio * dim, rng)
        self.fc2 = Linear(mlp_ratio * dim, dim, rng)

    def forward(self, x, mask=None):
        x = x + self.attn(self.norm1(x), mask)
        return x + self.fc2(F.gelu(self.fc1(self.norm2(x))))


def sinusoidal_encoding(positions: np.ndarray, dim: int) -> np.ndarray:
    """Standard sin/cos encoding of integer or real positions -> (len, dim)."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half, 1))
    angles = positions * freqs[None]
    enc = np.zeros((positions.shape[0], dim))
    enc[:, 0:2 * half:2] = np.sin(angles)
    enc[:, 1:2 * half:2] = np.cos(angles)
    return enc
