"""Diffusion training on frozen stage-1 latents, plus the sampling front end."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..motion.types import DuetSample, MotionSequence
from ..vq.train import TrainingDiverged, TrainResult, rng_stream
from .guidance import Stage1, contact_guidance_loss, decode_follower
from .model import DiffusionConfig, RCDiff
from .sampler import SampleResult, guided_ddim_sample
from .schedule import NoiseSchedule, forward_diffuse, make_schedule

log = logging.getLogger(__name__)


@dataclass
class DiffusionTrainConfig:
    epochs: int = 100
    iterations: int = 100
    batch: int = 8
    window: int = 64  # frames; must be a multiple of the downsample factor
    lr: float = 1e-4
    weight_decay: float = 0.01
    betas: tuple = (0.9, 0.999)
    max_grad_norm: float = 1.0


@dataclass
class EncodedDuet:
    x: np.ndarray  # (T', 6C) raw target latent
    leader: np.ndarray  # (T', 4C) raw leader latent
    music: np.ndarray  # (T, 54)


def diffusion_training_loss(predict, x0, y, schedule: NoiseSchedule, rng: np.random.Generator):
    """Mean squared error between the x0 estimate and x0 at random t and noise.

    ``x0`` is (B, T', D) in model units; returns ``(loss, t, eps)``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    t = rng.integers(1, schedule.steps + 1, size=x0.shape[0])
    eps = rng.standard_normal(x0.shape)
    x_t = forward_diffuse(x0, t, eps, schedule)
    x0_hat = predict(ad.Tensor(x_t), y, t)
    return ad.mean(ad.square(x0_hat - x0)), t, eps


def encode_dataset(duets: list[DuetSample], stage1: Stage1) -> list[EncodedDuet]:
    out = []
    for d in duets:
        if d.music is None:
            raise ValueError(f"{d.name}: music features are required for diffusion training")
        if d.frames % stage1.downsample:
            raise ValueError(f"{d.name}: length {d.frames} is not a multiple of {stage1.downsample}")
        x, lead = stage1.encode_duet(d)
        out.append(EncodedDuet(x, lead, np.asarray(d.music, dtype=np.float64)))
    return out


def _crop_sampler(data: list[EncodedDuet], window: int, f: int, batch: int, rng: np.random.Generator):
    if window % f:
        raise ValueError(f"window {window} is not a multiple of the downsample factor {f}")
    wq = window // f
    lengths = np.array([len(e.x) for e in data])
    if np.any(lengths < wq):
        raise ValueError(f"all sequences must have at least {window} frames")

    def sample():
        which = rng.integers(0, len(data), size=batch)
        starts = [int(rng.integers(0, lengths[i] - wq + 1)) for i in which]
        x = np.stack([data[i].x[s:s + wq] for i, s in zip(which, starts)])
        lead = np.stack([data[i].leader[s:s + wq] for i, s in zip(which, starts)])
        music = np.stack([data[i].music[s * f:(s + wq) * f] for i, s in zip(which, starts)])
        return x, lead, music

    return sample


def train_diffusion(duets: list[DuetSample], stage1: Stage1, cfg: DiffusionTrainConfig | None = None,
                    model_config: DiffusionConfig | None = None, seed: int = 0) -> TrainResult:
    """Fit RCDiff on latents from the frozen stage-1 models; returns per-epoch mean loss."""
    if not duets:
        raise ValueError("dataset is empty")
    cfg = cfg or DiffusionTrainConfig()
    mc = model_config or DiffusionConfig(latent_dim=stage1.latent_dim)
    if mc.latent_dim != stage1.latent_dim or mc.music.downsample != stage1.downsample:
        raise ValueError("diffusion config disagrees with the stage-1 latent width or downsample factor")
    data = encode_dataset(duets, stage1)
    model = RCDiff(mc, rng_stream(seed, "init-diff"))
    model.fit_stats(np.concatenate([e.x for e in data]), np.concatenate([e.leader for e in data]))
    schedule = make_schedule(mc.schedule, mc.steps)
    sample = _crop_sampler(data, cfg.window, stage1.downsample, cfg.batch, rng_stream(seed, "data-diff"))
    noise = rng_stream(seed, "noise")
    params = model.parameters()
    opt = ad.AdamW(params, lr=cfg.lr, betas=tuple(cfg.betas), weight_decay=cfg.weight_decay)
    result = TrainResult(model)
    for epoch in range(cfg.epochs):
        total = 0.0
        for _ in range(cfg.iterations):
            x, lead, music = sample()
            y = model.condition(lead, music)
            loss, _, _ = diffusion_training_loss(model.predict_x0, model.normalize_x(x), y, schedule, noise)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDiverged(f"diffusion: non-finite loss at epoch {epoch}")
            grads = ad.gradient(loss, params, warn_unreachable=False)
            for p, g in zip(params, grads):
                p.grad = g
            if cfg.max_grad_norm:
                ad.clip_grad_norm(params, cfg.max_grad_norm)
            opt.step()
            total += value
        result.history.append({"epoch": epoch, "loss": total / cfg.iterations})
        log.info("diffusion epoch %d loss %.5f", epoch, total / cfg.iterations)
    return result


@dataclass
class Reaction:
    follower: MotionSequence
    contacts: np.ndarray
    contact_prob: np.ndarray
    latent: np.ndarray  # raw latent (T', 6C)
    sample: SampleResult


def _pad_to(arr: np.ndarray, length: int) -> np.ndarray:
    if len(arr) >= length:
        return arr
    return np.concatenate([arr, np.repeat(arr[-1:], length - len(arr), axis=0)])


def react(model: RCDiff, stage1: Stage1, leader: MotionSequence, music: np.ndarray, lam: float = 0.1,
          steps: int = 50, seed: int = 0, guidance: bool = True, guidance_mode: str = "straight-through",
          max_grad_norm: float = 1.0, record: bool = False) -> Reaction:
    """Generate a follower for ``leader`` and per-frame ``music``.

    Lengths that are not a multiple of the downsample factor are padded by
    repeating the last frame; outputs are trimmed back to the leader length.
    """
    music = np.asarray(music, dtype=np.float64)
    if len(music) != leader.frames:
        raise ValueError(f"music has {len(music)} frames but the leader has {leader.frames}")
    f = stage1.downsample
    T = leader.frames
    Tp = -(-T // f) * f
    lead_local = _pad_to(leader.local_positions, Tp)
    lead_global = _pad_to(leader.global_positions(), Tp)
    lead_lat = stage1.motion.encode_latent(lead_local)
    with ad.no_grad():
        y = model.condition(lead_lat[None], _pad_to(music, Tp)[None]).data[0]
    schedule = make_schedule(model.config.schedule, model.config.steps)

    def loss_fn(x0_norm):
        loss, _ = contact_guidance_loss(model.denormalize_x(x0_norm), lead_global, stage1, guidance_mode)
        return loss

    use = guidance and lam > 0
    res = guided_ddim_sample(model.predict_x0, y, (Tp // f, model.x_layout.channels), schedule, steps,
                             lam if use else 0.0, seed, loss_fn if guidance else None, max_grad_norm, record=record)
    latent = model.denormalize_x(res.x)
    follower, mask, prob = decode_follower(latent, leader, stage1)
    return Reaction(follower, mask, prob, latent, res)
