"""Latent layout and the transformer x0-predictor."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..music.encoder import MusicEncoder, MusicEncoderConfig

TARGET_PARTS = ("U", "D", "L", "R", "d", "c")
CONDITION_PARTS = ("U", "D", "L", "R", "a")


@dataclass(frozen=True)
class LatentLayout:
    """Channel ranges of each component inside a concatenated latent."""

    names: tuple
    width: int

    @property
    def channels(self) -> int:
        return self.width * len(self.names)

    def span(self, name: str) -> slice:
        i = self.names.index(name)
        return slice(i * self.width, (i + 1) * self.width)

    def ranges(self) -> dict[str, tuple[int, int]]:
        return {n: (self.span(n).start, self.span(n).stop) for n in self.names}

    def split(self, x) -> dict:
        return {n: x[..., self.span(n)] for n in self.names}

    def join(self, parts: dict) -> np.ndarray:
        missing = [n for n in self.names if n not in parts]
        if missing:
            raise KeyError(f"latent components missing: {missing}")
        lengths = {np.shape(parts[n])[-2] for n in self.names}
        if len(lengths) != 1:
            raise ValueError(f"latent components disagree in length: {sorted(lengths)}")
        return np.concatenate([np.asarray(parts[n]) for n in self.names], axis=-1)


@dataclass
class DiffusionConfig:
    latent_dim: int = 32
    dim: int = 64
    heads: int = 4
    blocks: int = 3
    steps: int = 1000
    schedule: str = "cosine"
    music: MusicEncoderConfig = field(default_factory=MusicEncoderConfig)


class RCDiff(ad.Module):
    """Predicts the clean target latent from (x_t, condition, t).

    The music encoder lives here because it trains jointly with the
    denoiser. Latents enter and leave in normalized units; ``stats`` holds
    the per-channel mean and scale fitted on the training set.
    """

    def __init__(self, config: DiffusionConfig, rng: np.random.Generator):
        if config.music.out_dim != config.latent_dim:
            raise ValueError("music encoder width must equal the latent width")
        self.config = config
        C, D = config.latent_dim, config.dim
        self.x_layout = LatentLayout(TARGET_PARTS, C)
        self.y_layout = LatentLayout(CONDITION_PARTS, C)
        self.music = MusicEncoder(config.music, rng)
        self.inp = ad.Linear(self.x_layout.channels + self.y_layout.channels, D, rng)
        self.t1 = ad.Linear(D, D, rng)
        self.t2 = ad.Linear(D, D, rng)
        self.blocks = [ad.TransformerBlock(D, config.heads, rng) for _ in range(config.blocks)]
        self.norm = ad.LayerNorm(D)
        self.out = ad.Linear(D, self.x_layout.channels, rng)
        self.stats = {
            "x_mean": np.zeros(self.x_layout.channels), "x_scale": np.ones(self.x_layout.channels),
            "l_mean": np.zeros(4 * C), "l_scale": np.ones(4 * C),
        }

    # -- normalization --------------------------------------------------------
    def fit_stats(self, x: np.ndarray, leader: np.ndarray, floor: float = 1e-3) -> None:
        """Per-channel mean and std over every (sequence, frame); tiny scales are floored."""
        for key, arr in (("x", x), ("l", leader)):
            flat = np.asarray(arr).reshape(-1, arr.shape[-1])
            std = flat.std(axis=0)
            self.stats[f"{key}_mean"] = flat.mean(axis=0)
            self.stats[f"{key}_scale"] = np.maximum(std, floor * max(std.max(), 1e-12))

    def normalize_x(self, x):
        return (x - self.stats["x_mean"]) * (1.0 / self.stats["x_scale"])

    def denormalize_x(self, x):
        return x * self.stats["x_scale"] + self.stats["x_mean"]

    # -- forward ---------------------------------------------------------------
    def condition(self, leader_latent, music_features) -> ad.Tensor:
        """Raw leader part latents (B, T', 4C) and music (B, T, 54) -> y (B, T', 5C)."""
        lead = (np.asarray(leader_latent) - self.stats["l_mean"]) / self.stats["l_scale"]
        f_a = self.music(music_features)
        if f_a.shape[-2] != lead.shape[-2]:
            raise ad.ShapeError("condition", f"music gives {f_a.shape[-2]} latent frames, leader {lead.shape[-2]}")
        return ad.concat([ad.as_tensor(lead), f_a], axis=-1)

    def timestep_embedding(self, t) -> ad.Tensor:
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        emb = ad.sinusoidal_encoding(t, self.config.dim)
        return self.t2(ad.gelu(self.t1(emb)))

    def predict_x0(self, x_t, y, t) -> ad.Tensor:
        """x_t (B, T', 6C) normalized, y (B, T', 5C), t scalar or (B,)."""
        x_t, y = ad.as_tensor(x_t), ad.as_tensor(y)
        squeeze = x_t.ndim == 2
        if squeeze:
            x_t, y = ad.reshape(x_t, (1,) + x_t.shape), ad.reshape(y, (1,) + y.shape)
        if x_t.shape[:2] != y.shape[:2]:
            raise ad.ShapeError("predict_x0", f"x_t {x_t.shape} and condition {y.shape} disagree")
        B, Tq, _ = x_t.shape
        temb = self.timestep_embedding(t)
        temb = ad.reshape(temb, (temb.shape[0], 1, self.config.dim))
        pos = ad.sinusoidal_encoding(np.arange(Tq), self.config.dim)[None]
        h = self.inp(ad.concat([x_t, y], axis=-1)) + temb + pos
        for block in self.blocks:
            h = block(h)
        out = self.out(self.norm(h))
        return ad.reshape(out, out.shape[1:]) if squeeze else out

    __call__ = predict_x0
