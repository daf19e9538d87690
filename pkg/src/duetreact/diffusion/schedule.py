"""Noise schedules and the closed-form forward/inverse algebra."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCHEDULES = ("cosine", "linear")


@dataclass(frozen=True)
class NoiseSchedule:
    """``alpha_bar[t]`` for t = 0..steps; index 0 is the clean signal (1.0)."""

    name: str
    alphas: np.ndarray  # (steps + 1,), alphas[0] == 1
    alpha_bar: np.ndarray  # (steps + 1,)

    @property
    def steps(self) -> int:
        return len(self.alpha_bar) - 1

    def check(self, t) -> np.ndarray:
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.steps) or not np.issubdtype(t.dtype, np.integer):
            raise ValueError(f"timestep must be an integer in [1, {self.steps}], got {t}")
        return t

    @classmethod
    def from_alpha_bar(cls, alpha_bar, name: str = "custom") -> "NoiseSchedule":
        """Schedule from cumulative products for t = 1..T (a leading 1 is prepended)."""
        ab = np.concatenate([[1.0], np.asarray(alpha_bar, dtype=np.float64)])
        if np.any(ab < 0) or np.any(ab > 1) or np.any(np.diff(ab) > 0):
            raise ValueError("alpha_bar must be non-increasing within [0, 1]")
        with np.errstate(divide="ignore", invalid="ignore"):
            alphas = np.where(ab[:-1] > 0, ab[1:] / ab[:-1], 0.0)
        return cls(name, np.concatenate([[1.0], alphas]), ab)


def cosine_schedule(steps: int = 1000, s: float = 0.008, max_beta: float = 0.999) -> NoiseSchedule:
    f = np.cos((np.arange(steps + 1) / steps + s) / (1 + s) * np.pi / 2) ** 2
    betas = np.clip(1.0 - f[1:] / f[:-1], 0.0, max_beta)
    alphas = np.concatenate([[1.0], 1.0 - betas])
    return NoiseSchedule("cosine", alphas, np.cumprod(alphas))


def linear_schedule(steps: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    betas = np.linspace(beta_start, beta_end, steps)
    alphas = np.concatenate([[1.0], 1.0 - betas])
    return NoiseSchedule("linear", alphas, np.cumprod(alphas))


def make_schedule(name: str = "cosine", steps: int = 1000) -> NoiseSchedule:
    if name == "cosine":
        return cosine_schedule(steps)
    if name == "linear":
        return linear_schedule(steps)
    raise ValueError(f"unknown schedule {name!r}; expected one of {SCHEDULES}")


def _bcast(values: np.ndarray, ndim: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return values.reshape(values.shape + (1,) * (ndim - values.ndim))


def forward_diffuse(x0, t, eps, schedule: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps; ``t`` scalar or one per batch row."""
    t = schedule.check(t)
    x0 = np.asarray(x0, dtype=np.float64)
    ab = _bcast(schedule.alpha_bar[t], x0.ndim)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * np.asarray(eps, dtype=np.float64)


def epsilon_from_x0(x_t, x0_hat, t, schedule: NoiseSchedule):
    """Noise implied by an x0 estimate. Works on arrays and tensors."""
    t = schedule.check(t)
    ab = schedule.alpha_bar[t]
    if np.any(ab >= 1.0):
        raise ZeroDivisionError(f"alpha_bar is 1 at t={t}; the noise is undefined")
    nd = x_t.ndim
    return (x_t - np.sqrt(_bcast(ab, nd)) * x0_hat) * (1.0 / np.sqrt(1.0 - _bcast(ab, nd)))


def ddim_timesteps(schedule: NoiseSchedule, count: int) -> np.ndarray:
    """Descending, evenly strided subsequence of [1, T] that starts at T."""
    if not 1 <= count <= schedule.steps:
        raise ValueError(f"step count must lie in [1, {schedule.steps}], got {count}")
    ts = np.round(np.linspace(schedule.steps, 1, count)).astype(np.int64)
    return np.unique(ts)[::-1]
