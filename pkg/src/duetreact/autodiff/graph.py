"""Named computations and the finite-difference gradient check."""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import ShapeError, Tensor, gradient, no_grad


class Graph:
    """A function of named inputs plus a set of named parameters.

    ``fn`` receives the inputs as keyword tensors and returns a tensor or a
    mapping of named tensors. ``input_shapes`` pins the expected shape of
    each input; ``None`` entries in a shape are wildcards.
    """

    def __init__(self, fn: Callable, input_shapes: Mapping[str, tuple] | None = None,
                 parameters: Mapping[str, Tensor] | None = None):
        self.fn = fn
        self.input_shapes = dict(input_shapes or {})
        self.parameters = dict(parameters or {})

    def _check(self, inputs: Mapping[str, object]) -> dict[str, Tensor]:
        out = {}
        for name, shape in self.input_shapes.items():
            if name not in inputs:
                raise ShapeError(name, "missing input")
            value = inputs[name]
            t = value if isinstance(value, Tensor) else Tensor(value)
            if len(shape) != t.ndim or any(s is not None and s != n for s, n in zip(shape, t.shape)):
                raise ShapeError(name, f"expected shape {shape}, got {t.shape}")
            out[name] = t
        for name, value in inputs.items():
            if name not in out:
                out[name] = value if isinstance(value, Tensor) else Tensor(value)
        return out

    def build(self, inputs: Mapping[str, object]):
        """Run ``fn`` with graph recording enabled."""
        return self.fn(**self._check(inputs))


def evaluate(graph: Graph, inputs: Mapping[str, object]) -> dict[str, np.ndarray]:
    with no_grad():
        result = graph.build(inputs)
    if isinstance(result, Tensor):
        return {"out": result.data.copy()}
    return {k: v.data.copy() for k, v in result.items()}


def finite_diff_check(loss_fn: Callable[[], Tensor], wrt, h: float = 1e-5) -> dict[str, float]:
    """Compare autodiff against central differences.

    ``loss_fn`` rebuilds a scalar loss from the current values of the
    tensors in ``wrt`` (a list or a name -> tensor mapping). Returns, per
    tensor, ``max |g_ad - g_fd| / max |g_fd|`` (denominator floored at 1e-12).
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    named = dict(wrt) if isinstance(wrt, Mapping) else {t.name or f"t{i}": t for i, t in enumerate(wrt)}
    tensors = list(named.values())
    analytic = gradient(loss_fn(), tensors, warn_unreachable=False)
    errors = {}
    for (name, t), g_ad in zip(named.items(), analytic):
        flat = t.data.reshape(-1)
        g_fd = np.zeros(flat.size)
        with no_grad():
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = float(loss_fn().data)
                flat[i] = orig - h
                fm = float(loss_fn().data)
                flat[i] = orig
                g_fd[i] = (fp - fm) / (2.0 * h)
        if not flat.size:
            errors[name] = 0.0
            continue
        scale = max(float(np.abs(g_fd).max()), 1e-12)
        errors[name] = float(np.abs(g_ad.reshape(-1) - g_fd).max()) / scale
    return errors
