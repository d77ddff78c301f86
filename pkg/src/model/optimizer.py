# src/model/optimizer.py
import math
from typing import Dict, Mapping, Optional

import numpy as np

from src.domain.models import TrainConfig


def lr_schedule(step: int, config: TrainConfig) -> float:
    """Linear warmup to learning_rate, then cosine decay to zero at total_steps."""
    warmup = config.resolved_warmup
    if step < warmup:
        return config.learning_rate * (step + 1) / warmup
    remaining = max(1, config.total_steps - warmup)
    progress = min(1.0, (step - warmup) / remaining)
    return 0.5 * config.learning_rate * (1.0 + math.cos(math.pi * progress))


def decays(name: str, array: np.ndarray) -> bool:
    """Weight decay applies to matrices only; norms, biases, SSM constants and the scale are exempt."""
    return array.ndim >= 2 and not name.endswith(".a_log")


class AdamW:
    """Adam with decoupled weight decay over named numpy arrays."""

    def __init__(self, config: TrainConfig, m: Optional[Mapping[str, np.ndarray]] = None,
                 v: Optional[Mapping[str, np.ndarray]] = None, step: int = 0):
        self.config = config
        self.m: Dict[str, np.ndarray] = {k: a.copy() for k, a in (m or {}).items()}
        self.v: Dict[str, np.ndarray] = {k: a.copy() for k, a in (v or {}).items()}
        self.step_count = step

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
             lr: float) -> Dict[str, np.ndarray]:
        cfg = self.config
        self.step_count += 1
        t = self.step_count
        correction1 = 1.0 - cfg.beta1 ** t
        correction2 = 1.0 - cfg.beta2 ** t
        updated = {}
        for name, value in params.items():
            g = grads[name]
            m = self.m.get(name)
            v = self.v.get(name)
            m = (1.0 - cfg.beta1) * g if m is None else cfg.beta1 * m + (1.0 - cfg.beta1) * g
            v = (1.0 - cfg.beta2) * g * g if v is None else cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
            self.m[name], self.v[name] = m, v
            direction = (m / correction1) / (np.sqrt(v / correction2) + cfg.eps)
            if decays(name, value):
                direction = direction + cfg.weight_decay * value
            updated[name] = (value - lr * direction).astype(value.dtype)
        return updated
