"""Transformer music encoder producing features at the latent frame rate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from .features import CHANNELS


@dataclass
class MusicEncoderConfig:
    dim: int = 32
    heads: int = 4
    blocks: int = 2
    downsample: int = 4
    out_dim: int = 32


class MusicEncoder(ad.Module):
    """Linear projection, sinusoidal positions, transformer blocks, strided conv."""

    def __init__(self, config: MusicEncoderConfig, rng: np.random.Generator, zero_proj: bool = False):
        self.config = config
        self.proj = ad.Linear(CHANNELS, config.dim, rng, zero=zero_proj)
        self.blocks = [ad.TransformerBlock(config.dim, config.heads, rng) for _ in range(config.blocks)]
        self.norm = ad.LayerNorm(config.dim)
        f = config.downsample
        self.down = ad.Conv1d(config.dim, config.out_dim, f, rng, stride=f)

    def forward(self, features):
        """(T, 54) or (B, T, 54) -> (T', C) or (B, T', C) with T' = ceil(T / f)."""
        x = ad.as_tensor(features)
        squeeze = x.ndim == 2
        if squeeze:
            x = ad.reshape(x, (1,) + x.shape)
        B, T, _ = x.shape
        f = self.config.downsample
        pad = (-T) % f
        mask = None
        if pad:
            x = ad.concat([x, np.zeros((B, pad, CHANNELS))], axis=1)
            mask = np.ones((B, T + pad), dtype=bool)
            mask[:, T:] = False
        h = self.proj(x) + ad.nn.sinusoidal_encoding(np.arange(T + pad), self.config.dim)[None]
        for block in self.blocks:
            h = block(h, mask)
        h = self.down(self.norm(h))
        return ad.reshape(h, h.shape[1:]) if squeeze else h
