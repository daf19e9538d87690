"""Frozen stage-1 decoders, follower decoding and the contact consistency loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..motion.ops import reduction_matrix
from ..motion.types import DuetSample, MotionSequence
from ..vq.aux import ContactVQ, TrajectoryVQ, contact_from_logits
from ..vq.partfusion import PartFusionVQ
from ..vq.quantize import quantize
from .model import CONDITION_PARTS, TARGET_PARTS, LatentLayout

DECODE_MODES = ("quantized", "straight-through", "continuous")


@dataclass
class Stage1:
    """The three frozen VQ-VAEs that define the latent space."""

    motion: PartFusionVQ
    trajectory: TrajectoryVQ
    contact: ContactVQ

    def __post_init__(self):
        if self.motion.config.mode == "single":
            raise ValueError("diffusion needs the four part latents; a single-codebook VQ has none")
        widths = {self.motion.config.latent_dim, self.trajectory.config.latent_dim, self.contact.config.latent_dim}
        if len(widths) != 1:
            raise ValueError(f"stage-1 latent widths differ: {sorted(widths)}")
        factors = {self.motion.config.downsample, self.trajectory.config.downsample, self.contact.config.downsample}
        if len(factors) != 1:
            raise ValueError(f"stage-1 downsample factors differ: {sorted(factors)}")

    @property
    def latent_dim(self) -> int:
        return self.motion.config.latent_dim

    @property
    def downsample(self) -> int:
        return self.motion.config.downsample

    @property
    def x_layout(self) -> LatentLayout:
        return LatentLayout(TARGET_PARTS, self.latent_dim)

    @property
    def y_layout(self) -> LatentLayout:
        return LatentLayout(CONDITION_PARTS, self.latent_dim)

    def codebooks(self) -> dict:
        books = dict(self.motion.codebooks)
        books["d"] = self.trajectory.codebook
        books["c"] = self.contact.codebook
        return books

    def parameters(self) -> list:
        return self.motion.parameters() + self.trajectory.parameters() + self.contact.parameters()

    # -- encoding ---------------------------------------------------------------
    def encode_duet(self, duet: DuetSample) -> tuple[np.ndarray, np.ndarray]:
        """Raw (unnormalized) target latent (T', 6C) and leader part latents (T', 4C)."""
        x = np.concatenate([
            self.motion.encode_latent(duet.follower.local_positions),
            self.trajectory.encode_latent(duet.trajectory),
            self.contact.encode_latent(duet.contacts),
        ], axis=-1)
        lead = self.motion.encode_latent(duet.leader.local_positions)
        return x, lead

    # -- decoding ---------------------------------------------------------------
    def _snap(self, z, name: str, mode: str):
        if mode == "continuous":
            return z
        book = self.codebooks().get(name)
        if book is None:
            raise KeyError(f"no codebook for latent component {name!r}")
        q = quantize(z.data if isinstance(z, ad.Tensor) else z, book, name).quantized
        if mode == "quantized":
            return q
        return z + ad.stop_gradient(q - z)

    def decode(self, x, mode: str = "quantized"):
        """Raw latent (T', 6C) -> local positions (T, 54, 3), rotations, offsets (T, 3), contact logits."""
        if mode not in DECODE_MODES:
            raise ValueError(f"unknown decode mode {mode!r}; expected one of {DECODE_MODES}")
        parts = self.x_layout.split(x if isinstance(x, ad.Tensor) else np.asarray(x, dtype=np.float64))
        z = {n: self._snap(parts[n], n, mode) for n in TARGET_PARTS}
        p, r, _ = self.motion.decode({s: z[s] for s in ("U", "D", "L", "R")})
        d = self.trajectory.decode(z["d"])
        logits = self.contact.decode(z["c"])
        logits = ad.reshape(logits, logits.shape[:-1] + (23, 23))
        return p, r, d, logits


def follower_global(local, offsets, leader_root):
    """Recentre decoded joints on their root, then place them at leader root + offset."""
    local = ad.as_tensor(local)
    centred = local - local[..., 0:1, :]
    root = ad.as_tensor(offsets) + np.asarray(leader_root, dtype=np.float64)
    return centred + ad.reshape(root, root.shape[:-1] + (1, 3))


def contact_consistency_loss(follower_reduced, leader_reduced, mask, eps: float = 1e-8) -> ad.Tensor:
    """Per-frame sum_ij c_ij |f_i - l_j|^2 / (sum_ij c_ij + eps), summed over frames.

    Leading axes of the (..., 23, 3) inputs count as frames. The mask carries
    no gradient.
    """
    f = ad.as_tensor(follower_reduced)
    lead = np.asarray(leader_reduced.data if isinstance(leader_reduced, ad.Tensor) else leader_reduced,
                      dtype=np.float64)
    c = np.asarray(mask.data if isinstance(mask, ad.Tensor) else mask, dtype=np.float64)
    if f.shape != lead.shape or c.shape != f.shape[:-2] + (f.shape[-2], lead.shape[-2]):
        raise ad.ShapeError("contact_consistency_loss",
                            f"follower {f.shape}, leader {lead.shape}, mask {c.shape}")
    n = f.shape[-2]
    diff = ad.reshape(f, f.shape[:-2] + (n, 1, 3)) - lead[..., None, :, :]
    dist2 = ad.sum_(ad.square(diff), axis=-1)
    per_frame = ad.sum_(dist2 * c, axis=(-2, -1)) * (1.0 / (c.sum(axis=(-2, -1)) + eps))
    return ad.sum_(per_frame)


def contact_guidance_loss(x0, leader_global: np.ndarray, stage1: Stage1, mode: str = "straight-through"):
    """Decode a raw latent estimate and score it against its own predicted contacts.

    Returns ``(loss, mask)``. The mask is thresholded from the decoded
    contact logits and enters the loss as a constant.
    """
    p, _, d, logits = stage1.decode(x0, mode)
    _, mask = contact_from_logits(logits.data, stage1.contact.config.contact_threshold)
    leader_global = np.asarray(leader_global, dtype=np.float64)
    if leader_global.shape[0] != p.shape[0]:
        raise ad.ShapeError("contact_guidance_loss",
                            f"leader has {leader_global.shape[0]} frames, decoded follower {p.shape[0]}")
    R = reduction_matrix(stage1.motion.skeleton)
    fg = follower_global(p, d, leader_global[:, 0])
    return contact_consistency_loss(ad.matmul(R, fg), R @ leader_global, mask), mask


def mean_contact_distance(follower_g: np.ndarray, leader_g: np.ndarray, mask: np.ndarray,
                          skeleton=None) -> float:
    """Mean Euclidean distance over flagged (t, i, j) pairs; NaN when nothing is flagged."""
    R = reduction_matrix() if skeleton is None else reduction_matrix(skeleton)
    f, lead = R @ follower_g, R @ leader_g
    t, i, j = np.nonzero(mask)
    if len(t) == 0:
        return float("nan")
    return float(np.linalg.norm(f[t, i] - lead[t, j], axis=-1).mean())


def decode_follower(x, leader: MotionSequence, stage1: Stage1, quantized: bool = True):
    """Raw latent (T', 6C) -> follower MotionSequence, contact mask, contact probabilities."""
    with ad.no_grad():
        p, r, d, logits = stage1.decode(x, "quantized" if quantized else "continuous")
    T = leader.frames
    if p.shape[0] < T:
        raise ad.ShapeError("decode_follower", f"latent decodes to {p.shape[0]} frames, leader has {T}")
    p, r, d, logits = p.data[:T], r.data[:T], d.data[:T], logits.data[:T]
    prob, mask = contact_from_logits(logits, stage1.contact.config.contact_threshold)
    local = p - p[:, 0:1]
    follower = MotionSequence(local, r, leader.root_translation + d, leader.fps)
    return follower, mask, prob
