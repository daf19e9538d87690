"""Adam and AdamW over lists of :class:`Parameter`."""
from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, params, lr: float = 3e-4, betas=(0.5, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0, decoupled: bool = False):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.decoupled = decoupled
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            if self.weight_decay and not self.decoupled:
                g = g + self.weight_decay * p.data
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay and self.decoupled:
                p.data = p.data - self.lr * self.weight_decay * p.data
            p.data = p.data - self.lr * update

    def state(self) -> dict:
        return {"step": self.step_count, "m": [m.copy() for m in self.m], "v": [v.copy() for v in self.v]}


class AdamW(Adam):
    def __init__(self, params, lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        super().__init__(params, lr, betas, eps, weight_decay, decoupled=True)


class StepDecay:
    """Multiply the learning rate by ``gamma`` at each milestone epoch."""

    def __init__(self, optimizer: Adam, milestones, gamma: float = 0.1):
        self.optimizer = optimizer
        self.base_lr = optimizer.lr
        self.milestones = sorted(milestones)
        self.gamma = gamma

    def set_epoch(self, epoch: int) -> None:
        passed = sum(1 for m in self.milestones if epoch >= m)
        self.optimizer.lr = self.base_lr * self.gamma ** passed


def clip_grad_norm(params, max_norm: float) -> float:
    grads = [p.grad for p in params if p.grad is not None]
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total
