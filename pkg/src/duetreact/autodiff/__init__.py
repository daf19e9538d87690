"""Reverse-mode autodiff on float64 numpy arrays."""
from .graph import Graph, evaluate, finite_diff_check
from .nn import (Conv1d, ConvTranspose1d, LayerNorm, Linear, Module, MultiHeadAttention, Parameter,
                 TransformerBlock, sinusoidal_encoding)
from .optim import Adam, AdamW, StepDecay, clip_grad_norm
from .tensor import (ShapeError, Tensor, abs_, add, as_tensor, clip, concat, conv1d, conv_transpose1d, div,
                     embedding, exp, gelu, getitem, gradient, is_grad_enabled, layer_norm, log, matmul, mean,
                     mul, neg, no_grad, power, relu, reshape, sigmoid, softmax, sqrt, square, stack,
                     stop_gradient, sub, sum_, swapaxes, tanh, transpose)

__all__ = [name for name in dir() if not name.startswith("_")]
