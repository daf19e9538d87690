"""Training loops for the motion, trajectory and contact VQ-VAEs."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..motion.ops import root_velocity
from ..motion.types import DuetSample, MotionSequence
from .aux import AuxVQConfig, ContactVQ, TrajectoryVQ
from .partfusion import PartFusionVQ, VQConfig

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class VQTrainConfig:
    epochs: int = 200
    iterations: int = 200
    batch: int = 16
    window: int = 64
    lr: float = 3e-4
    betas: tuple = (0.5, 0.999)
    decay_at: tuple = (0.5, 0.8)  # fractions of the epoch budget
    decay: float = 0.1
    revive_dead: bool = True


@dataclass
class TrainResult:
    model: object
    history: list = field(default_factory=list)

    def column(self, key: str) -> np.ndarray:
        return np.array([row[key] for row in self.history])


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent named substream of a root seed."""
    tag = int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng([seed, tag])


def motion_arrays(motion: MotionSequence) -> dict:
    return {
        "positions": motion.local_positions,
        "rotations": motion.rotations,
        "root_velocity": root_velocity(motion.root_translation),
    }


def _window_sampler(items: list[dict], window: int, batch: int, rng: np.random.Generator):
    lengths = np.array([len(next(iter(it.values()))) for it in items])
    if np.any(lengths < window):
        raise ValueError(f"all sequences must have at least {window} frames")

    def sample() -> dict:
        which = rng.integers(0, len(items), size=batch)
        starts = [int(rng.integers(0, lengths[i] - window + 1)) for i in which]
        return {key: np.stack([items[i][key][s:s + window] for i, s in zip(which, starts)])
                for key in items[0]}

    return sample


def _revive(codebooks: dict, encodings: dict, rng: np.random.Generator) -> dict:
    revived = {}
    for name, cb in codebooks.items():
        dead = np.nonzero(cb.usage == 0)[0]
        revived[name] = int(len(dead))
        if len(dead):
            pool = encodings[name].reshape(-1, cb.dim)
            pick = rng.integers(0, len(pool), size=len(dead))
            cb.entries.data[dead] = pool[pick]
    return revived


def _fit(model, sample, codebooks: dict, encode_for_revival, cfg: VQTrainConfig, seed: int,
         label: str) -> TrainResult:
    params = model.parameters()
    opt = ad.Adam(params, lr=cfg.lr, betas=tuple(cfg.betas))
    sched = ad.StepDecay(opt, [int(round(f * cfg.epochs)) for f in cfg.decay_at], cfg.decay)
    revive_rng = rng_stream(seed, "revive")
    result = TrainResult(model)
    # data-dependent codebook init: every entry starts as a real encoding
    with ad.no_grad():
        _revive(codebooks, encode_for_revival(sample()), revive_rng)
    for epoch in range(cfg.epochs):
        sched.set_epoch(epoch)
        for cb in codebooks.values():
            cb.usage[:] = 0
        sums: dict[str, float] = {}
        for _ in range(cfg.iterations):
            batch = sample()
            loss, terms = model.loss(batch, track_usage=True)
            if not np.isfinite(loss.item()):
                raise TrainingDiverged(f"{label}: non-finite loss at epoch {epoch}: {terms}")
            grads = ad.gradient(loss, params, warn_unreachable=False)
            for p, g in zip(params, grads):
                p.grad = g
            opt.step()
            for k, v in terms.items():
                sums[k] = sums.get(k, 0.0) + v
        row = {"epoch": epoch, "lr": opt.lr}
        row.update({k: v / cfg.iterations for k, v in sums.items()})
        for name, cb in codebooks.items():
            row[f"usage_{name}"] = float(np.mean(cb.usage > 0))
        if cfg.revive_dead and epoch + 1 < cfg.epochs:
            with ad.no_grad():
                enc = encode_for_revival(sample())
            for name, n in _revive(codebooks, enc, revive_rng).items():
                row[f"revived_{name}"] = n
        result.history.append(row)
        log.info("%s epoch %d loss %.5f", label, epoch, row.get("total", float("nan")))
    return result


def train_vq(motions: list[MotionSequence], cfg: VQTrainConfig | None = None,
             vq_config: VQConfig | None = None, seed: int = 0) -> TrainResult:
    """Train a PartFusion-style motion VQ-VAE (any ablation mode)."""
    if not motions:
        raise ValueError("dataset is empty")
    cfg = cfg or VQTrainConfig()
    model = PartFusionVQ(vq_config or VQConfig(), rng_stream(seed, "init"))
    items = [motion_arrays(m) for m in motions]
    model.fit_stats(*(np.concatenate([it[k] for it in items]) for k in ("positions", "rotations", "root_velocity")))
    sample = _window_sampler(items, cfg.window, cfg.batch, rng_stream(seed, "data"))
    codebooks = model.codebooks

    def encode(batch):
        return {s: z.data for s, z in model.encode(batch["positions"]).items()}

    return _fit(model, sample, codebooks, encode, cfg, seed, f"vq-{model.config.mode}")


def train_trajectory_vq(duets: list[DuetSample], cfg: VQTrainConfig | None = None,
                        aux_config: AuxVQConfig | None = None, seed: int = 0) -> TrainResult:
    if not duets:
        raise ValueError("dataset is empty")
    cfg = cfg or VQTrainConfig()
    model = TrajectoryVQ(aux_config or AuxVQConfig(), rng_stream(seed, "init-traj"))
    model.fit_stats(np.concatenate([d.trajectory for d in duets]))
    sample = _window_sampler([{"trajectory": d.trajectory} for d in duets], cfg.window, cfg.batch,
                             rng_stream(seed, "data-traj"))
    return _fit(model, sample, {"d": model.codebook},
                lambda b: {"d": model.encode(b["trajectory"]).data}, cfg, seed, "vq-trajectory")


def train_contact_vq(duets: list[DuetSample], cfg: VQTrainConfig | None = None,
                     aux_config: AuxVQConfig | None = None, seed: int = 0) -> TrainResult:
    if not duets:
        raise ValueError("dataset is empty")
    cfg = cfg or VQTrainConfig()
    model = ContactVQ(aux_config or AuxVQConfig(), rng_stream(seed, "init-contact"))
    items = [{"contacts": d.contacts.reshape(len(d.contacts), -1).astype(np.float64)} for d in duets]
    sample = _window_sampler(items, cfg.window, cfg.batch, rng_stream(seed, "data-contact"))
    return _fit(model, sample, {"c": model.codebook},
                lambda b: {"c": model.encode(b["contacts"]).data}, cfg, seed, "vq-contact")
