"""Optimizer, schedule, clipping, early stopping, and the MSE loss."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch
from .layers import Param


@dataclass
class OptimConfig:
    lr_max: float = 1e-3
    lr_min: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0
    batch_size: int = 16
    max_epochs: int = 200
    patience: int = 20

    def __post_init__(self):
        if not 0.0 < self.lr_min <= self.lr_max:
            raise ValueError(f"need 0 < lr_min <= lr_max, got [{self.lr_min}, {self.lr_max}]")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")


def mse(pred, target) -> float:
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mse shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.astype(np.float64) - target.astype(np.float64)
    return float(np.mean(diff * diff))


def mse_grad(pred, target) -> np.ndarray:
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mse shapes differ: {pred.shape} vs {target.shape}")
    return (2.0 / pred.size) * (pred - target)


def cosine_lr(epoch: int, lr_max: float, lr_min: float, max_epochs: int) -> float:
    if epoch > max_epochs:
        raise ValueError(f"epoch {epoch} beyond max_epochs {max_epochs}")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * epoch / max_epochs))


def clip_gradients(params: list[Param], max_norm: float) -> float:
    """Scale the concatenated gradient vector to norm <= max_norm (in place).
    Returns the pre-clip global norm."""
    total = 0.0
    for p in params:
        total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params:
            p.grad *= scale
    return norm


def early_stop(val_history, patience: int) -> bool:
    """True once `patience` epochs have passed without a new validation minimum."""
    if len(val_history) <= patience:
        return False
    best = int(np.argmin(val_history))
    return len(val_history) - 1 - best >= patience


class Adam:
    def __init__(self, params: list[Param], cfg: OptimConfig):
        self.params = params
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float):
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * p.grad
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * p.grad**2
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
