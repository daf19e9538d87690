"""Scaled-down trend studies on synthetic duets.

``stage1_ablation`` compares the three motion VQ architectures on held-out
follower reconstruction. ``guidance_study`` trains a small end-to-end stack
and measures how contact guidance moves generated followers.
"""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass

import numpy as np

from .motion.synth import SynthConfig, synth_duet
from .diffusion import (DiffusionConfig, DiffusionTrainConfig, Stage1, mean_contact_distance, react,
                        train_diffusion)
from .vq import (MODES, AuxVQConfig, VQConfig, VQTrainConfig, train_contact_vq, train_trajectory_vq,
                 train_vq)


@dataclass
class AblationResult:
    mpjpe: dict  # mode -> held-out MPJPE (mm) per seed
    seconds: float
    seeds: tuple = ()

    def mean(self, mode: str) -> float:
        return float(np.mean(self.mpjpe[mode]))

    def ranking(self) -> list[str]:
        return sorted(self.mpjpe, key=self.mean)


def reconstruction_mpjpe(model, motions) -> float:
    """Mean over sequences of the per-joint local position error, in mm."""
    errs = [np.linalg.norm(model.reconstruct(m.local_positions) - m.local_positions, axis=-1).mean() for m in motions]
    return 1000.0 * float(np.mean(errs))


def stage1_ablation(seeds=(0, 1, 2), modes=MODES, count: int = 50, held_out: int = 10, frames: int = 128,
                    train_config: VQTrainConfig | None = None, vq_config: VQConfig | None = None,
                    log=None) -> AblationResult:
    """Train every mode on the first ``count - held_out`` followers and score the rest."""
    if not 0 < held_out < count:
        raise ValueError("held_out must leave at least one training sequence")
    t0 = time.time()
    duets = [synth_duet(SynthConfig(frames=frames, with_audio=False), seed=s) for s in range(count)]
    train = [d.follower for d in duets[:count - held_out]]
    test = [d.follower for d in duets[count - held_out:]]
    tcfg = train_config or VQTrainConfig(epochs=8, iterations=100, batch=8)
    base = vq_config or VQConfig()
    out = {m: [] for m in modes}
    for seed in seeds:
        for mode in modes:
            model = train_vq(train, tcfg, dataclasses.replace(base, mode=mode), seed=seed).model
            out[mode].append(reconstruction_mpjpe(model, test))
            if log:
                log(f"seed {seed} {mode}: {out[mode][-1]:.2f} mm")
    return AblationResult(out, time.time() - t0, tuple(seeds))


@dataclass
class GuidanceResult:
    distance: dict  # lambda -> mean contact distance (m) per sample seed
    seconds: float

    def wins(self, lam: float, baseline: float = 0.0) -> int:
        """Samples where ``lam`` ends closer than ``baseline`` (NaN never wins)."""
        return int(np.sum(np.asarray(self.distance[lam]) < np.asarray(self.distance[baseline])))

    def median(self, lam: float) -> float:
        return float(np.nanmedian(self.distance[lam]))


def train_small_stack(count: int = 24, held_out: int = 4, frames: int = 128, vq_train: VQTrainConfig | None = None,
                      diffusion_train: DiffusionTrainConfig | None = None, seed: int = 0):
    """Train all stages on synthetic duets; returns (stage1, model, held-out duets)."""
    duets = [synth_duet(SynthConfig(frames=frames), seed=s) for s in range(count)]
    train, test = duets[:count - held_out], duets[count - held_out:]
    vt = vq_train or VQTrainConfig(epochs=8, iterations=100, batch=8)
    motion = train_vq([d.follower for d in train] + [d.leader for d in train], vt, VQConfig(), seed=seed).model
    traj = train_trajectory_vq(train, vt, AuxVQConfig(), seed=seed).model
    contact = train_contact_vq(train, vt, AuxVQConfig(), seed=seed).model
    stage1 = Stage1(motion, traj, contact)
    dt = diffusion_train or DiffusionTrainConfig(epochs=10, iterations=100, batch=8)
    model = train_diffusion(train, stage1, dt, DiffusionConfig(), seed=seed).model
    return stage1, model, test


def guidance_study(stage1, model, duets, lambdas=(0.0, 0.05, 0.1, 0.2), samples: int = 20,
                   steps: int = 50) -> GuidanceResult:
    """Sample each lambda with shared seeds and score distance over the predicted contacts."""
    t0 = time.time()
    out = {lam: [] for lam in lambdas}
    for k in range(samples):
        d = duets[k % len(duets)]
        for lam in lambdas:
            r = react(model, stage1, d.leader, d.music, lam=lam, steps=steps, seed=k, record=False)
            out[lam].append(mean_contact_distance(r.follower.global_positions(), d.leader.global_positions(),
                                                  r.contacts))
    return GuidanceResult(out, time.time() - t0)
