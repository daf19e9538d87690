"""Part-wise encoders and codebooks with a shared fusion decoder.

Three architectures share this class so the ablation compares like with
like:

``fused``
    four part encoders and codebooks, a linear fusion of the four quantized
    streams, then one decoder per output head (positions, rotations, root
    velocity) over the fused stream.
``separate``
    four encoders, four codebooks and four independent decoders; each part
    decoder reconstructs only its own joints (the lower-body decoder also
    owns the root velocity).
``single``
    one encoder and codebook over the whole body, decoded like ``fused``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..motion.skeleton import DEFAULT_SKELETON, PART_ORDER, Skeleton
from .nets import ConvDecoder, ConvEncoder, levels_for
from .quantize import Codebook, codebook_loss, commitment_loss, quantize, quantize_st, reconstruction_loss

MODES = ("fused", "separate", "single")


@dataclass
class VQConfig:
    mode: str = "fused"
    codebook_size: int = 64
    latent_dim: int = 32
    downsample: int = 4
    hidden: int = 64
    commitment: float = 0.25
    # hidden width of the shared decoders; 0 gives 2 * hidden, the same
    # hidden-layer parameter budget as four part decoders of width hidden
    decoder_hidden: int = 0


def split_parts(p: np.ndarray, skeleton: Skeleton = DEFAULT_SKELETON) -> dict[str, np.ndarray]:
    """(..., 54, C) -> {U, D, L, R: (..., J_s, C)}."""
    return {s: p[..., skeleton.partition[s], :] for s in PART_ORDER}


def merge_parts(parts: dict[str, np.ndarray], skeleton: Skeleton = DEFAULT_SKELETON) -> np.ndarray:
    first = parts[PART_ORDER[0]]
    out = np.empty(first.shape[:-2] + (skeleton.joint_count, first.shape[-1]), dtype=first.dtype)
    for s in PART_ORDER:
        out[..., skeleton.partition[s], :] = parts[s]
    return out


class PartFusionVQ(ad.Module):
    def __init__(self, config: VQConfig, rng: np.random.Generator, skeleton: Skeleton = DEFAULT_SKELETON,
                 zero_decoders: bool = False):
        if config.mode not in MODES:
            raise ValueError(f"unknown VQ mode {config.mode!r}; expected one of {MODES}")
        self.config = config
        self.skeleton = skeleton
        J = skeleton.joint_count
        C, H = config.latent_dim, config.hidden
        levels = levels_for(config.downsample)
        if config.mode == "single":
            self.parts = ("B",)
            self.part_joints = {"B": list(range(J))}
        else:
            self.parts = PART_ORDER
            self.part_joints = {s: list(skeleton.partition[s]) for s in PART_ORDER}
        self.encoders = {s: ConvEncoder(3 * len(self.part_joints[s]), H, C, levels, rng) for s in self.parts}
        self.codebooks = {s: Codebook(config.codebook_size, C, rng) for s in self.parts}
        if config.mode == "separate":
            self.fusion = None
            self.decoders = {s: ConvDecoder(C, H, self._separate_width(s), levels, rng, zero=zero_decoders)
                             for s in self.parts}
        else:
            Hd = config.decoder_hidden or 2 * H
            self.fusion = ad.Linear(C * len(self.parts), Hd, rng, zero=zero_decoders) if config.mode == "fused" else None
            dec_in = Hd if self.fusion is not None else C
            self.decoders = {
                "p": ConvDecoder(dec_in, Hd, J * 3, levels, rng, zero=zero_decoders),
                "r": ConvDecoder(dec_in, Hd, J * 6, levels, rng, zero=zero_decoders),
                "g": ConvDecoder(dec_in, Hd, 3, levels, rng, zero=zero_decoders),
            }
        order = np.concatenate([self.part_joints[s] for s in self.parts])
        self._inverse = np.argsort(order)
        # inputs are standardized and outputs de-standardized with these
        self.stats = {"p_mean": np.zeros((J, 3)), "p_scale": np.ones((J, 3)),
                      "r_mean": np.zeros((J, 6)), "r_scale": np.ones((J, 6)),
                      "g_mean": np.zeros(3), "g_scale": np.ones(3)}

    def fit_stats(self, positions: np.ndarray, rotations: np.ndarray, velocity: np.ndarray) -> None:
        """Per-channel mean and spread over all frames of the training data."""
        for key, arr in (("p", positions), ("r", rotations), ("g", velocity)):
            flat = np.asarray(arr, dtype=np.float64).reshape((-1,) + self.stats[f"{key}_mean"].shape)
            std = flat.std(axis=0)
            self.stats[f"{key}_mean"] = flat.mean(axis=0)
            self.stats[f"{key}_scale"] = np.maximum(std, 0.05 * std.mean() + 1e-12)

    def _separate_width(self, part: str) -> int:
        n = len(self.part_joints[part])
        return n * 9 + (3 if part == "D" else 0)

    @property
    def decoder_count(self) -> int:
        """Number of independent decoder stacks that reconstruct joint positions."""
        return len(self.parts) if self.config.mode == "separate" else 1

    @property
    def latent_width(self) -> int:
        return self.config.latent_dim * len(self.parts)

    # -- encoding ---------------------------------------------------------
    def encode(self, positions) -> dict[str, ad.Tensor]:
        """Local joint positions (B, T, J, 3) -> pre-quantization latents per part."""
        positions = np.asarray(positions.data if isinstance(positions, ad.Tensor) else positions)
        B, T = positions.shape[:2]
        if T % self.config.downsample:
            raise ValueError(f"sequence length {T} is not divisible by {self.config.downsample}")
        positions = (positions - self.stats["p_mean"]) / self.stats["p_scale"]
        out = {}
        for s in self.parts:
            x = positions[:, :, self.part_joints[s], :].reshape(B, T, -1)
            out[s] = self.encoders[s](x)
        return out

    def encode_latent(self, positions) -> np.ndarray:
        """(T, J, 3) or (B, T, J, 3) -> channel-concatenated pre-quant latents."""
        positions = np.asarray(positions)
        squeeze = positions.ndim == 3
        if squeeze:
            positions = positions[None]
        with ad.no_grad():
            z = self.encode(positions)
        lat = np.concatenate([z[s].data for s in self.parts], axis=-1)
        return lat[0] if squeeze else lat

    def split_latent(self, latent) -> dict:
        C = self.config.latent_dim
        return {s: latent[..., i * C:(i + 1) * C] for i, s in enumerate(self.parts)}

    def quantize_latent(self, latent: np.ndarray) -> np.ndarray:
        parts = self.split_latent(np.asarray(latent))
        return np.concatenate([quantize(parts[s], self.codebooks[s], s).quantized for s in self.parts], axis=-1)

    # -- decoding ---------------------------------------------------------
    def decode(self, latents: dict) -> tuple[ad.Tensor, ad.Tensor, ad.Tensor]:
        """Per-part (B, T', C) latents -> positions, rotations, root velocity."""
        z = {s: ad.as_tensor(latents[s]) for s in self.parts}
        lengths = {z[s].shape[-2] for s in self.parts}
        if len(lengths) != 1:
            raise ad.ShapeError("fuse_decode", f"part latents disagree in length: {sorted(lengths)}")
        squeeze = z[self.parts[0]].ndim == 2
        if squeeze:
            z = {s: ad.reshape(v, (1,) + v.shape) for s, v in z.items()}
        B, Tq = z[self.parts[0]].shape[:2]
        T = Tq * self.config.downsample
        J = self.skeleton.joint_count
        if self.config.mode == "separate":
            pos_parts, rot_parts, g = [], [], None
            for s in self.parts:
                n = len(self.part_joints[s])
                out = self.decoders[s](z[s])
                pos_parts.append(ad.reshape(out[:, :, :3 * n], (B, T, n, 3)))
                rot_parts.append(ad.reshape(out[:, :, 3 * n:9 * n], (B, T, n, 6)))
                if s == "D":
                    g = out[:, :, 9 * n:]
            p = ad.concat(pos_parts, axis=2)[:, :, self._inverse]
            r = ad.concat(rot_parts, axis=2)[:, :, self._inverse]
        else:
            h = ad.concat([z[s] for s in self.parts], axis=-1)
            if self.fusion is not None:
                h = self.fusion(h)
            p = ad.reshape(self.decoders["p"](h), (B, T, J, 3))
            r = ad.reshape(self.decoders["r"](h), (B, T, J, 6))
            g = self.decoders["g"](h)
        st = self.stats
        p, r, g = p * st["p_scale"] + st["p_mean"], r * st["r_scale"] + st["r_mean"], g * st["g_scale"] + st["g_mean"]
        if squeeze:
            p, r, g = ad.reshape(p, p.shape[1:]), ad.reshape(r, r.shape[1:]), ad.reshape(g, g.shape[1:])
        return p, r, g

    def fuse_decode(self, z_u, z_d, z_l, z_r):
        if self.config.mode == "single":
            raise ValueError("single-codebook model has no part latents to fuse")
        return self.decode({"U": z_u, "D": z_d, "L": z_l, "R": z_r})

    def decode_latent(self, latent, quantized: bool = True):
        """Channel-concatenated latent (B, T', width) -> decoded tensors."""
        lat = np.asarray(latent.data if isinstance(latent, ad.Tensor) else latent)
        if quantized:
            lat = self.quantize_latent(lat)
        return self.decode(self.split_latent(lat))

    # -- training ---------------------------------------------------------
    def loss(self, batch: dict, track_usage: bool = False) -> tuple[ad.Tensor, dict]:
        """Composite objective on a batch with keys positions, rotations, root_velocity."""
        z_e = self.encode(batch["positions"])
        z_st, vq_terms = {}, []
        for s in self.parts:
            z_st[s], z_q, _ = quantize_st(z_e[s], self.codebooks[s], track_usage)
            vq_terms.append((codebook_loss(z_e[s], z_q), commitment_loss(z_e[s], z_q)))
        p, r, g = self.decode(z_st)
        rec_p = reconstruction_loss(p, batch["positions"], time_axis=1)
        rec_r = reconstruction_loss(r, batch["rotations"], time_axis=1)
        rec_g = reconstruction_loss(g, batch["root_velocity"], time_axis=1)
        cb = sum((a for a, _ in vq_terms), ad.Tensor(0.0))
        cm = sum((b for _, b in vq_terms), ad.Tensor(0.0))
        total = rec_p + rec_r + rec_g + cb + self.config.commitment * cm
        terms = {"rec_p": rec_p.item(), "rec_r": rec_r.item(), "rec_g": rec_g.item(),
                 "codebook": cb.item(), "commitment": cm.item(), "total": total.item()}
        return total, terms

    def reconstruct(self, positions: np.ndarray) -> np.ndarray:
        """Encode, quantize and decode local positions (no graph)."""
        positions = np.asarray(positions)
        squeeze = positions.ndim == 3
        if squeeze:
            positions = positions[None]
        with ad.no_grad():
            z = self.encode(positions)
            q = {s: quantize(z[s].data, self.codebooks[s], s).quantized for s in self.parts}
            p, _, _ = self.decode(q)
        return p.data[0] if squeeze else p.data
