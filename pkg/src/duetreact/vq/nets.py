"""Strided 1D-convolution encoders and transposed-convolution decoders."""
from __future__ import annotations

import numpy as np

from .. import autodiff as ad


class ConvEncoder(ad.Module):
    """(B, T, in) -> (B, T / 2**levels, out)."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, levels: int, rng: np.random.Generator):
        self.inp = ad.Conv1d(in_dim, hidden, 3, rng, padding=1)
        self.down = [ad.Conv1d(hidden, hidden, 4, rng, stride=2, padding=1) for _ in range(levels)]
        self.res = [ad.Conv1d(hidden, hidden, 3, rng, padding=1) for _ in range(levels)]
        self.out = ad.Conv1d(hidden, out_dim, 3, rng, padding=1)

    def forward(self, x):
        h = ad.relu(self.inp(x))
        for down, res in zip(self.down, self.res):
            h = ad.relu(down(h))
            h = h + ad.relu(res(h))
        return self.out(h)


class ConvDecoder(ad.Module):
    """(B, T', in) -> (B, T' * 2**levels, out)."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, levels: int, rng: np.random.Generator,
                 zero: bool = False):
        self.inp = ad.Conv1d(in_dim, hidden, 3, rng, padding=1, zero=zero)
        self.up = [ad.ConvTranspose1d(hidden, hidden, 4, rng, stride=2, padding=1, zero=zero) for _ in range(levels)]
        self.res = [ad.Conv1d(hidden, hidden, 3, rng, padding=1, zero=zero) for _ in range(levels)]
        self.out = ad.Conv1d(hidden, out_dim, 3, rng, padding=1, zero=zero)

    def forward(self, z):
        h = ad.relu(self.inp(z))
        for up, res in zip(self.up, self.res):
            h = ad.relu(up(h))
            h = h + ad.relu(res(h))
        return self.out(h)


def levels_for(factor: int) -> int:
    levels = int(round(np.log2(factor)))
    if 2 ** levels != factor:
        raise ValueError(f"downsample factor must be a power of two, got {factor}")
    return levels
