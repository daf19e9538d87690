"""Codebooks, nearest-entry quantization and the VQ-VAE loss terms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels
from .. import autodiff as ad


class Codebook(ad.Module):
    def __init__(self, size: int, dim: int, rng: np.random.Generator):
        self.entries = ad.Parameter(rng.uniform(-1.0 / size, 1.0 / size, size=(size, dim)))
        self.usage = np.zeros(size, dtype=np.int64)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def dim(self) -> int:
        return self.entries.shape[1]

    def nearest(self, z: np.ndarray) -> np.ndarray:
        return nearest_indices(z, self.entries.data)


def nearest_indices(z: np.ndarray, entries: np.ndarray) -> np.ndarray:
    """Per-row argmin of Euclidean distance; ties go to the lowest index."""
    entries = np.asarray(entries, dtype=np.float64)
    if entries.ndim != 2 or entries.shape[0] == 0:
        raise ValueError("codebook is empty")
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != entries.shape[1]:
        raise ValueError(f"latent dim {z.shape[-1]} != codebook dim {entries.shape[1]}")
    flat = z.reshape(-1, z.shape[-1])
    return _kernels.nearest_codes(flat, entries).reshape(z.shape[:-1])


@dataclass
class LatentCode:
    part: str
    pre_quant: np.ndarray  # (T', C)
    indices: np.ndarray  # (T',)
    quantized: np.ndarray  # (T', C)


def quantize(z_e, codebook, part: str = "") -> LatentCode:
    """Snap each latent vector to its nearest codebook entry (no graph)."""
    entries = codebook.entries.data if isinstance(codebook, Codebook) else np.asarray(codebook, dtype=np.float64)
    z = z_e.data if isinstance(z_e, ad.Tensor) else np.asarray(z_e, dtype=np.float64)
    idx = nearest_indices(z, entries)
    return LatentCode(part, z.copy(), idx, entries[idx])


def quantize_st(z_e: ad.Tensor, codebook: Codebook, track_usage: bool = False):
    """Quantize inside a training graph.

    Returns ``(z_st, z_q, indices)``: ``z_st`` carries z_q's value with an
    identity gradient to ``z_e`` (straight-through); ``z_q`` is the gathered
    codebook rows, differentiable with respect to the codebook.
    """
    idx = nearest_indices(z_e.data, codebook.entries.data)
    if track_usage:
        np.add.at(codebook.usage, idx.reshape(-1), 1)
    z_q = ad.embedding(codebook.entries, idx)
    z_st = z_e + ad.stop_gradient(z_q - z_e)
    return z_st, z_q, idx


def codebook_loss(z_e: ad.Tensor, z_q: ad.Tensor) -> ad.Tensor:
    """mean ||sg(z_e) - z_q||^2: moves codebook entries only."""
    return ad.mean(ad.square(ad.stop_gradient(z_e) - z_q))


def commitment_loss(z_e: ad.Tensor, z_q: ad.Tensor) -> ad.Tensor:
    """mean ||z_e - sg(z_q)||^2: moves the encoder only."""
    return ad.mean(ad.square(z_e - ad.stop_gradient(z_q)))


def temporal_diff(x, axis: int = -2):
    """Forward difference along the time axis for tensors or arrays."""
    n = x.shape[axis]
    ax = axis % x.ndim
    hi = tuple(slice(1, n) if i == ax else slice(None) for i in range(x.ndim))
    lo = tuple(slice(0, n - 1) if i == ax else slice(None) for i in range(x.ndim))
    return x[hi] - x[lo]


def reconstruction_loss(pred, target, time_axis: int = -2) -> ad.Tensor:
    """L1 on values plus L1 on first and second temporal differences."""
    pred = ad.as_tensor(pred)
    target = ad.as_tensor(target)
    if pred.shape != target.shape:
        raise ad.ShapeError("reconstruction_loss", f"{pred.shape} vs {target.shape}")
    T = pred.shape[time_axis]
    if T < 1:
        raise ValueError("sequence must have at least one frame")
    loss = ad.mean(ad.abs_(pred - target))
    if T >= 2:
        dp, dt = temporal_diff(pred, time_axis), temporal_diff(target, time_axis)
        loss = loss + ad.mean(ad.abs_(dp - dt))
        if T >= 3:
            loss = loss + ad.mean(ad.abs_(temporal_diff(dp, time_axis) - temporal_diff(dt, time_axis)))
    return loss


def focal_loss(logits, targets, alpha: float = 0.25, gamma: float = 2.0) -> ad.Tensor:
    """Binary focal loss averaged over every entry.

    ``-a_t (1 - p_t)^gamma log p_t`` with p_t the probability given to the
    true class, a_t = alpha for positives and 1 - alpha for negatives.
    """
    if not 0 < alpha <= 1 or gamma < 0:
        raise ValueError("need 0 < alpha <= 1 and gamma >= 0")
    logits = ad.as_tensor(logits)
    t = np.asarray(targets.data if isinstance(targets, ad.Tensor) else targets, dtype=np.float64)
    p = ad.clip(ad.sigmoid(logits), 1e-7, 1 - 1e-7)
    p_t = p * t + (1.0 - p) * (1.0 - t)
    a_t = alpha * t + (1.0 - alpha) * (1.0 - t)
    mod = ad.power(1.0 - p_t, gamma) if gamma != 0 else 1.0
    return ad.mean(-a_t * mod * ad.log(p_t))
