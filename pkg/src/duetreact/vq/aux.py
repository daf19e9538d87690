"""Single-codebook VQ-VAEs for the relative root trajectory and the contact matrix."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from .nets import ConvDecoder, ConvEncoder, levels_for
from .quantize import Codebook, codebook_loss, commitment_loss, focal_loss, quantize, quantize_st, reconstruction_loss

CONTACT_JOINTS = 23
CONTACT_WIDTH = CONTACT_JOINTS * CONTACT_JOINTS


@dataclass
class AuxVQConfig:
    codebook_size: int = 64
    latent_dim: int = 32
    downsample: int = 4
    hidden: int = 64
    commitment: float = 0.25
    focal_alpha: float = 0.75  # weight on the rare positive class
    focal_gamma: float = 2.0
    contact_threshold: float = 0.5


class SequenceVQ(ad.Module):
    """Encoder -> codebook -> decoder over a (B, T, width) signal."""

    def __init__(self, in_dim: int, out_dim: int, config: AuxVQConfig, rng: np.random.Generator):
        self.config = config
        levels = levels_for(config.downsample)
        self.encoder = ConvEncoder(in_dim, config.hidden, config.latent_dim, levels, rng)
        self.codebook = Codebook(config.codebook_size, config.latent_dim, rng)
        self.decoder = ConvDecoder(config.latent_dim, config.hidden, out_dim, levels, rng)
        self.stats = {"mean": np.zeros(in_dim), "scale": np.ones(in_dim)}

    def fit_stats(self, signal: np.ndarray) -> None:
        flat = self._prep(signal).reshape(-1, self.stats["mean"].shape[0])
        std = flat.std(axis=0)
        self.stats["mean"] = flat.mean(axis=0)
        self.stats["scale"] = np.maximum(std, 0.05 * std.mean() + 1e-12)

    def _prep(self, x) -> np.ndarray:
        raise NotImplementedError

    def _standardize(self, x) -> np.ndarray:
        return (self._prep(x) - self.stats["mean"]) / self.stats["scale"]

    def encode(self, x) -> ad.Tensor:
        return self.encoder(self._standardize(x))

    def encode_latent(self, x) -> np.ndarray:
        arr = self._standardize(x)
        squeeze = arr.ndim == 2
        with ad.no_grad():
            z = self.encoder(arr[None] if squeeze else arr).data
        return z[0] if squeeze else z

    def quantize_latent(self, latent: np.ndarray) -> np.ndarray:
        return quantize(latent, self.codebook).quantized

    def decode(self, z):
        return self.decoder(ad.as_tensor(z)) * self.stats["scale"] + self.stats["mean"]

    def vq_forward(self, x, track_usage: bool = False):
        z_e = self.encode(x)
        z_st, z_q, _ = quantize_st(z_e, self.codebook, track_usage)
        return self.decode(z_st), codebook_loss(z_e, z_q), commitment_loss(z_e, z_q)


class TrajectoryVQ(SequenceVQ):
    """Relative root offsets (T, 3)."""

    def __init__(self, config: AuxVQConfig, rng: np.random.Generator):
        super().__init__(3, 3, config, rng)

    def _prep(self, x):
        return np.asarray(x.data if isinstance(x, ad.Tensor) else x, dtype=np.float64)

    def loss(self, batch: dict, track_usage: bool = False):
        d = batch["trajectory"]
        d_hat, cb, cm = self.vq_forward(d, track_usage)
        rec = reconstruction_loss(d_hat, d, time_axis=1)
        total = rec + cb + self.config.commitment * cm
        return total, {"rec": rec.item(), "codebook": cb.item(), "commitment": cm.item(), "total": total.item()}

    def decode_offsets(self, z, quantized: bool = True):
        z = np.asarray(z.data if isinstance(z, ad.Tensor) else z)
        return self.decode(self.quantize_latent(z) if quantized else z)


class ContactVQ(SequenceVQ):
    """Contact matrices (T, 23, 23), flattened to 529 channels per frame."""

    def __init__(self, config: AuxVQConfig, rng: np.random.Generator):
        super().__init__(CONTACT_WIDTH, CONTACT_WIDTH, config, rng)
        self.stats = {}  # binary input, logit output: nothing to standardize

    def _standardize(self, x) -> np.ndarray:
        return self._prep(x)

    def decode(self, z):
        return self.decoder(ad.as_tensor(z))

    def _prep(self, x):
        arr = np.asarray(x.data if isinstance(x, ad.Tensor) else x, dtype=np.float64)
        return arr.reshape(arr.shape[:-2] + (CONTACT_WIDTH,)) if arr.shape[-1] == CONTACT_JOINTS else arr

    def loss(self, batch: dict, track_usage: bool = False):
        c = self._prep(batch["contacts"])
        logits, cb, cm = self.vq_forward(c, track_usage)
        focal = focal_loss(logits, c, self.config.focal_alpha, self.config.focal_gamma)
        total = focal + cb + self.config.commitment * cm
        return total, {"focal": focal.item(), "codebook": cb.item(), "commitment": cm.item(), "total": total.item()}

    def logits(self, z, quantized: bool = True) -> ad.Tensor:
        z_arr = z.data if isinstance(z, ad.Tensor) else np.asarray(z)
        out = self.decode(self.quantize_latent(z_arr) if quantized else z)
        return ad.reshape(out, out.shape[:-1] + (CONTACT_JOINTS, CONTACT_JOINTS))

    def decode_contact(self, z, quantized: bool = True) -> tuple[np.ndarray, np.ndarray]:
        with ad.no_grad():
            logits = self.logits(z, quantized).data
        return contact_from_logits(logits, self.config.contact_threshold)


def contact_from_logits(logits: np.ndarray, threshold: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Sigmoid probabilities and the binary mask ``prob > threshold``."""
    prob = 1.0 / (1.0 + np.exp(-np.asarray(logits, dtype=np.float64)))
    return prob, (prob > threshold).astype(np.uint8)
