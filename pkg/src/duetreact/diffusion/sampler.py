"""Deterministic DDIM sampling with optional contact guidance."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import autodiff as ad
from .schedule import NoiseSchedule, ddim_timesteps, epsilon_from_x0

log = logging.getLogger(__name__)


@dataclass
class SampleResult:
    x: np.ndarray  # final latent, model (normalized) units
    timesteps: np.ndarray
    trace: list = field(default_factory=list)  # guidance loss per step (NaN when not evaluated)
    grad_norms: list = field(default_factory=list)
    x0_history: list = field(default_factory=list)  # network x0 estimate per step, before guidance


def clip_guidance(grad: np.ndarray, max_norm: float) -> tuple[np.ndarray, float]:
    """Zero non-finite entries (with a warning) and cap the L2 norm."""
    if not np.all(np.isfinite(grad)):
        warnings.warn("non-finite guidance gradient; non-finite entries zeroed before clipping",
                      RuntimeWarning, stacklevel=3)
        log.warning("non-finite guidance gradient")
        grad = np.nan_to_num(grad, nan=0.0, posinf=0.0, neginf=0.0)
    norm = float(np.linalg.norm(grad))
    if max_norm > 0 and norm > max_norm:
        grad = grad * (max_norm / norm)
    return grad, norm


def guided_epsilon(eps: np.ndarray, grad: np.ndarray, alpha_bar: float, lam: float) -> np.ndarray:
    """Noise estimate after subtracting ``lam * grad`` from the score.

    With score = -eps / sqrt(1 - ab), the shifted score corresponds to
    eps + lam * sqrt(1 - ab) * grad.
    """
    return eps + lam * np.sqrt(1.0 - alpha_bar) * grad


def ddim_step(x_t: np.ndarray, eps: np.ndarray, alpha_bar_t: float, alpha_bar_next: float) -> tuple[np.ndarray, np.ndarray]:
    """One eta = 0 update; returns (x_next, x0 implied by eps)."""
    x0 = (x_t - np.sqrt(1.0 - alpha_bar_t) * eps) / np.sqrt(alpha_bar_t)
    return np.sqrt(alpha_bar_next) * x0 + np.sqrt(1.0 - alpha_bar_next) * eps, x0


def guided_ddim_sample(predict: Callable, y, shape: tuple, schedule: NoiseSchedule, step_count: int = 50,
                       lam: float = 0.0, seed: int = 0, guidance: Callable | None = None,
                       max_grad_norm: float = 1.0, rng: np.random.Generator | None = None,
                       record: bool = False) -> SampleResult:
    """Run DDIM from pure noise.

    ``predict(x_t, y, t)`` returns the x0 estimate as a tensor. ``guidance``
    maps that estimate to a scalar loss tensor; it is differentiated with
    respect to x_t only when ``lam > 0``. With ``lam == 0`` the update is
    the plain sampler, and ``guidance`` (if given) is only evaluated for the
    trace.
    """
    if lam < 0:
        raise ValueError("guidance weight must be non-negative")
    ts = ddim_timesteps(schedule, step_count)
    if rng is None:
        from ..vq.train import rng_stream

        rng = rng_stream(seed, "sampler")
    x = rng.standard_normal(shape)
    result = SampleResult(x, ts)
    with ad.no_grad():
        y = ad.as_tensor(y).detach() if isinstance(y, ad.Tensor) else ad.as_tensor(np.asarray(y))
    for k, t in enumerate(ts):
        t_next = int(ts[k + 1]) if k + 1 < len(ts) else 0
        ab, ab_next = schedule.alpha_bar[t], schedule.alpha_bar[t_next]
        if lam > 0 and guidance is not None:
            xt = ad.Tensor(x, requires_grad=True)
            x0_t = predict(xt, y, int(t))
            loss = guidance(x0_t)
            (grad,) = ad.gradient(loss, [xt], warn_unreachable=False)
            grad, norm = clip_guidance(grad, max_grad_norm)
            x0 = x0_t.data
            eps = guided_epsilon(epsilon_from_x0(x, x0, int(t), schedule), grad, ab, lam)
            result.trace.append(loss.item())
            result.grad_norms.append(norm)
        else:
            with ad.no_grad():
                x0 = predict(ad.Tensor(x), y, int(t)).data
                if guidance is not None:
                    result.trace.append(guidance(ad.Tensor(x0)).item())
            eps = epsilon_from_x0(x, x0, int(t), schedule)
        if record:
            result.x0_history.append(x0.copy())
        x, _ = ddim_step(x, eps, ab, ab_next)
    result.x = x
    return result
