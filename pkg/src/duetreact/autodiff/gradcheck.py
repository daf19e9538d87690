"""Finite-difference checks for every differentiable op.

Each case draws fresh inputs from a generator and returns the op applied
to them. Inputs of ops with kinks (abs, relu, clip) are kept away from the
kink so a central difference never straddles it.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import tensor as T
from .tensor import Tensor, gradient, no_grad


def _away(rng, shape, gap=0.1):
    """Uniform values with |x| >= gap."""
    x = rng.uniform(gap, 1.5, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def _idx(rng):
    return rng.integers(0, 5, size=(3, 2))


CASES: dict[str, Callable] = {
    "add": lambda r: (T.add, [r.normal(size=(3, 4)), r.normal(size=(4,))]),
    "sub": lambda r: (T.sub, [r.normal(size=(3, 1)), r.normal(size=(3, 4))]),
    "mul": lambda r: (T.mul, [r.normal(size=(3, 4)), r.normal(size=(1, 4))]),
    "div": lambda r: (T.div, [r.normal(size=(3, 4)), r.uniform(0.5, 2.0, size=(3, 4))]),
    "neg": lambda r: (T.neg, [r.normal(size=(5,))]),
    "power": lambda r: (lambda a: T.power(a, 2.5), [r.uniform(0.2, 2.0, size=(6,))]),
    "square": lambda r: (T.square, [r.normal(size=(6,))]),
    "sqrt": lambda r: (T.sqrt, [r.uniform(0.2, 2.0, size=(6,))]),
    "exp": lambda r: (T.exp, [r.normal(size=(6,))]),
    "log": lambda r: (T.log, [r.uniform(0.2, 3.0, size=(6,))]),
    "abs": lambda r: (T.abs_, [_away(r, (6,))]),
    "clip": lambda r: (lambda a: T.clip(a, -0.5, 0.5), [np.where(np.abs(x := _away(r, (8,))) > 0.45,
                                                                x + np.sign(x) * 0.1, x)]),
    "relu": lambda r: (T.relu, [_away(r, (6,))]),
    "gelu": lambda r: (T.gelu, [r.normal(size=(6,))]),
    "sigmoid": lambda r: (T.sigmoid, [r.normal(size=(6,))]),
    "tanh": lambda r: (T.tanh, [r.normal(size=(6,))]),
    "sum": lambda r: (lambda a: T.sum_(a, axis=1, keepdims=True), [r.normal(size=(3, 4))]),
    "mean": lambda r: (lambda a: T.mean(a, axis=(0, 2)), [r.normal(size=(2, 3, 4))]),
    "reshape": lambda r: (lambda a: T.reshape(a, (4, 3)), [r.normal(size=(3, 4))]),
    "transpose": lambda r: (lambda a: T.transpose(a, (2, 0, 1)), [r.normal(size=(2, 3, 4))]),
    "swapaxes": lambda r: (lambda a: T.swapaxes(a, 0, 2), [r.normal(size=(2, 3, 4))]),
    "getitem": lambda r: (lambda a: T.getitem(a, (slice(None), [2, 0, 2])), [r.normal(size=(3, 4))]),
    "getitem_ellipsis": lambda r: (lambda a: T.getitem(a, (Ellipsis, slice(1, 3), slice(None))),
                                   [r.normal(size=(2, 4, 3))]),
    "concat": lambda r: (lambda a, b: T.concat([a, b], axis=1), [r.normal(size=(2, 3)), r.normal(size=(2, 2))]),
    "stack": lambda r: (lambda a, b: T.stack([a, b], axis=1), [r.normal(size=(2, 3)), r.normal(size=(2, 3))]),
    "embedding": lambda r: (lambda tab, i=_idx(r): T.embedding(tab, i), [r.normal(size=(5, 3))]),
    "matmul": lambda r: (T.matmul, [r.normal(size=(2, 3, 4)), r.normal(size=(4, 2))]),
    "softmax": lambda r: (T.softmax, [r.normal(size=(3, 5))]),
    "layer_norm": lambda r: (T.layer_norm, [r.normal(size=(3, 5)), r.normal(size=(5,)), r.normal(size=(5,))]),
    "conv1d": lambda r: (lambda x, w, b: T.conv1d(x, w, b, stride=2, padding=1),
                         [r.normal(size=(1, 7, 2)), r.normal(size=(3, 2, 3)), r.normal(size=(3,))]),
    "conv_transpose1d": lambda r: (lambda x, w, b: T.conv_transpose1d(x, w, b, stride=2, padding=1),
                                   [r.normal(size=(1, 4, 2)), r.normal(size=(4, 2, 3)), r.normal(size=(3,))]),
}


def check_case(fn: Callable, arrays: list, rng: np.random.Generator, h: float = 1e-6) -> float:
    """Worst relative error over the inputs of ``fn`` at one point.

    The loss is a random weighting of the outputs, so the whole Jacobian is
    exercised. Error is ``max|g_ad - g_fd| / max|g_fd|`` per input.
    """
    xs = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    out = fn(*xs)
    w = rng.normal(size=out.shape)
    analytic = gradient(T.sum_(T.mul(out, w)), xs, warn_unreachable=False)
    worst = 0.0
    with no_grad():
        for x, g_ad in zip(xs, analytic):
            flat = x.data.reshape(-1)
            g_fd = np.empty(flat.size)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = float(np.sum(fn(*xs).data * w))
                flat[i] = orig - h
                fm = float(np.sum(fn(*xs).data * w))
                flat[i] = orig
                g_fd[i] = (fp - fm) / (2.0 * h)
            scale = max(float(np.abs(g_fd).max()), 1e-12)
            worst = max(worst, float(np.abs(g_ad.reshape(-1) - g_fd).max()) / scale)
    return worst


def run_all(points: int = 20, seed: int = 0, cases: dict | None = None) -> dict[str, float]:
    """Worst relative error per op over ``points`` random draws."""
    results = {}
    for k, (name, make) in enumerate((cases or CASES).items()):
        rng = np.random.default_rng([seed, k])
        worst = 0.0
        for _ in range(points):
            fn, arrays = make(rng)
            worst = max(worst, check_case(fn, arrays, rng))
        results[name] = worst
    return results
