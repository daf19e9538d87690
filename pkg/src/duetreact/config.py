"""Run configuration: INI sections with typed defaults.

Every key has a default taken from the library dataclasses, so a config
file only needs the values it changes. Unknown sections and keys are
rejected.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .diffusion.model import DiffusionConfig
from .diffusion.train import DiffusionTrainConfig
from .metrics.report import MetricsConfig
from .motion.synth import SynthConfig
from .music.encoder import MusicEncoderConfig
from .vq.aux import AuxVQConfig
from .vq.partfusion import MODES, VQConfig
from .vq.train import VQTrainConfig


class ConfigError(ValueError):
    pass


_synth, _vq, _vqt, _aux = SynthConfig(), VQConfig(), VQTrainConfig(), AuxVQConfig()
_mus, _dif, _dift, _met = MusicEncoderConfig(), DiffusionConfig(), DiffusionTrainConfig(), MetricsConfig()


@dataclass
class RunSection:
    seed: int = 0
    output: str = "run"


@dataclass
class DataSection:
    count: int = 50
    frames: int = _synth.frames
    fps: float = _synth.fps
    bpm: float = _synth.bpm
    lag: int = _synth.lag
    delta: float = _synth.delta
    spacing: float = _synth.spacing
    sample_rate: int = _synth.sample_rate
    episode_count: int = _synth.episode_count


@dataclass
class VQSection:
    mode: str = _vq.mode
    codebook_size: int = _vq.codebook_size
    latent_dim: int = _vq.latent_dim
    downsample: int = _vq.downsample
    hidden: int = _vq.hidden
    commitment: float = _vq.commitment
    epochs: int = _vqt.epochs
    iterations: int = _vqt.iterations
    batch: int = _vqt.batch
    window: int = _vqt.window
    lr: float = _vqt.lr
    decay_at: tuple = _vqt.decay_at
    revive_dead: bool = _vqt.revive_dead


@dataclass
class AuxSection:
    codebook_size: int = _aux.codebook_size
    hidden: int = _aux.hidden
    commitment: float = _aux.commitment
    focal_alpha: float = _aux.focal_alpha
    focal_gamma: float = _aux.focal_gamma
    contact_threshold: float = _aux.contact_threshold
    epochs: int = _vqt.epochs
    iterations: int = _vqt.iterations
    batch: int = _vqt.batch
    lr: float = _vqt.lr
    decay_at: tuple = _vqt.decay_at


@dataclass
class MusicSection:
    dim: int = _mus.dim
    heads: int = _mus.heads
    blocks: int = _mus.blocks


@dataclass
class DiffusionSection:
    dim: int = _dif.dim
    heads: int = _dif.heads
    blocks: int = _dif.blocks
    steps: int = _dif.steps
    schedule: str = _dif.schedule
    epochs: int = _dift.epochs
    iterations: int = _dift.iterations
    batch: int = _dift.batch
    window: int = _dift.window
    lr: float = _dift.lr
    weight_decay: float = _dift.weight_decay


@dataclass
class SamplingSection:
    lambda_c: float = 0.1
    steps: int = 50
    seed: int = 0
    guidance: bool = True
    guidance_mode: str = "straight-through"
    max_grad_norm: float = 1.0


@dataclass
class MetricsSection:
    delta: float = _met.delta
    window: int = _met.window
    sigma: float = _met.sigma


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    data: DataSection = field(default_factory=DataSection)
    vq: VQSection = field(default_factory=VQSection)
    aux: AuxSection = field(default_factory=AuxSection)
    music: MusicSection = field(default_factory=MusicSection)
    diffusion: DiffusionSection = field(default_factory=DiffusionSection)
    sampling: SamplingSection = field(default_factory=SamplingSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)

    # -- derived library configs ---------------------------------------------
    def synth_config(self) -> SynthConfig:
        d = self.data
        return SynthConfig(frames=d.frames, fps=d.fps, bpm=d.bpm, lag=d.lag, delta=d.delta, spacing=d.spacing,
                           sample_rate=d.sample_rate, episode_count=d.episode_count)

    def vq_config(self) -> VQConfig:
        v = self.vq
        return VQConfig(v.mode, v.codebook_size, v.latent_dim, v.downsample, v.hidden, v.commitment)

    def vq_train_config(self) -> VQTrainConfig:
        v = self.vq
        return VQTrainConfig(epochs=v.epochs, iterations=v.iterations, batch=v.batch, window=v.window, lr=v.lr,
                             decay_at=tuple(v.decay_at), revive_dead=v.revive_dead)

    def aux_config(self) -> AuxVQConfig:
        a = self.aux
        return AuxVQConfig(a.codebook_size, self.vq.latent_dim, self.vq.downsample, a.hidden, a.commitment,
                           a.focal_alpha, a.focal_gamma, a.contact_threshold)

    def aux_train_config(self) -> VQTrainConfig:
        a = self.aux
        return VQTrainConfig(epochs=a.epochs, iterations=a.iterations, batch=a.batch, window=self.vq.window,
                             lr=a.lr, decay_at=tuple(a.decay_at), revive_dead=self.vq.revive_dead)

    def diffusion_config(self) -> DiffusionConfig:
        m, d = self.music, self.diffusion
        music = MusicEncoderConfig(m.dim, m.heads, m.blocks, self.vq.downsample, self.vq.latent_dim)
        return DiffusionConfig(self.vq.latent_dim, d.dim, d.heads, d.blocks, d.steps, d.schedule, music)

    def diffusion_train_config(self) -> DiffusionTrainConfig:
        d = self.diffusion
        return DiffusionTrainConfig(epochs=d.epochs, iterations=d.iterations, batch=d.batch, window=d.window,
                                    lr=d.lr, weight_decay=d.weight_decay)

    def metrics_config(self) -> MetricsConfig:
        return MetricsConfig(self.metrics.delta, self.metrics.window, self.metrics.sigma)

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_ini(self) -> str:
        lines = []
        for sec in fields(self):
            lines.append(f"[{sec.name}]")
            for f in fields(getattr(self, sec.name)):
                lines.append(f"{f.name} = {_format(getattr(getattr(self, sec.name), f.name))}")
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> str:
        """Hash of every setting that can change results (the output path cannot)."""
        d = self.to_dict()
        del d["run"]["output"]
        blob = json.dumps(d, sort_keys=True, default=list).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def validate(self) -> None:
        if self.vq.mode not in MODES:
            raise ConfigError(f"vq.mode must be one of {MODES}, got {self.vq.mode!r}")
        if self.vq.downsample & (self.vq.downsample - 1) or self.vq.downsample < 1:
            raise ConfigError("vq.downsample must be a power of two")
        if self.vq.window % self.vq.downsample or self.diffusion.window % self.vq.downsample:
            raise ConfigError("training windows must be multiples of vq.downsample")
        if self.data.frames < max(self.vq.window, self.diffusion.window):
            raise ConfigError("data.frames is shorter than a training window")
        if self.data.count < 0:
            raise ConfigError("data.count must be non-negative")
        if self.sampling.lambda_c < 0:
            raise ConfigError("sampling.lambda_c must be non-negative")
        if not 1 <= self.sampling.steps <= self.diffusion.steps:
            raise ConfigError("sampling.steps must lie in [1, diffusion.steps]")
        if self.metrics.delta <= 0 or self.data.delta <= 0:
            raise ConfigError("contact thresholds must be positive")
        if self.diffusion.schedule not in ("cosine", "linear"):
            raise ConfigError(f"unknown diffusion.schedule {self.diffusion.schedule!r}")
        if self.sampling.guidance_mode not in ("quantized", "straight-through", "continuous"):
            raise ConfigError(f"unknown sampling.guidance_mode {self.sampling.guidance_mode!r}")


PROFILES = {
    "desk": {},
    # the published schedule, for hardware that can afford it
    "paper-scale": {
        "vq": {"epochs": 500, "iterations": 1000, "batch": 128, "lr": 3e-5, "decay_at": (0.2, 0.4)},
        "aux": {"epochs": 200, "iterations": 1000, "batch": 128, "lr": 3e-5, "decay_at": (0.5,)},
        "diffusion": {"epochs": 150, "iterations": 1000, "batch": 16, "lr": 1e-4},
    },
    # a few seconds per stage; for smoke tests
    "tiny": {
        "data": {"count": 4, "frames": 64},
        "vq": {"epochs": 2, "iterations": 3, "batch": 2, "codebook_size": 16, "latent_dim": 8, "hidden": 16},
        "aux": {"epochs": 2, "iterations": 3, "batch": 2, "codebook_size": 16, "hidden": 16},
        "music": {"dim": 8, "heads": 2, "blocks": 1},
        "diffusion": {"epochs": 2, "iterations": 3, "batch": 2, "dim": 16, "heads": 2, "blocks": 1, "steps": 100},
        "sampling": {"steps": 5},
    },
}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(raw: str, default, where: str):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(x) for x in raw.split(",") if x.strip())
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from None


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    for sec_name, values in overrides.items():
        if not hasattr(cfg, sec_name):
            raise ConfigError(f"unknown section [{sec_name}]")
        sec = getattr(cfg, sec_name)
        known = {f.name for f in fields(sec)}
        for key, value in values.items():
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{sec_name}]")
            default = getattr(sec, key)
            if isinstance(value, str) and not isinstance(default, str):
                value = _parse(value, default, f"{sec_name}.{key}")
            elif isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            setattr(sec, key, value)
    return cfg


def parse_config(text: str = "", profile: str = "desk") -> RunConfig:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; expected one of {sorted(PROFILES)}")
    cfg = apply_overrides(RunConfig(), PROFILES[profile])
    parser = configparser.ConfigParser(interpolation=None, default_section="\x00none")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    apply_overrides(cfg, {s: dict(parser.items(s)) for s in parser.sections()})
    cfg.validate()
    return cfg


def load_config(path: str | Path | None = None, profile: str = "desk") -> RunConfig:
    text = Path(path).read_text(encoding="utf-8") if path else ""
    return parse_config(text, profile)
