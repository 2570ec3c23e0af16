"""AdamW with decoupled weight decay and a linear warmup schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .encoders import ModelParams


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1.32e-4
    weight_decay: float = 0.013
    warmup_ratio: float = 0.19
    max_epochs: int = 20
    patience: int = 5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self) -> None:
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be nonnegative")
        if not 0.0 <= self.warmup_ratio < 1.0:
            raise ConfigError("warmup_ratio must lie in [0, 1)")
        if self.max_epochs < 0 or self.patience < 1:
            raise ConfigError("max_epochs must be >= 0 and patience >= 1")


def warmup_lr(step: int, total_steps: int, cfg: OptimizerConfig) -> float:
    """Learning rate for 0-based ``step``: linear ramp over the warmup fraction, then flat."""
    warm = math.ceil(cfg.warmup_ratio * total_steps)
    if warm <= 0 or step >= warm:
        return cfg.learning_rate
    return cfg.learning_rate * (step + 1) / warm


class AdamWState:
    def __init__(self, params: ModelParams):
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0


def adamw_update(p: np.ndarray, g: np.ndarray, m: np.ndarray, v: np.ndarray, t: int, lr: float,
                 cfg: OptimizerConfig) -> None:
    """One in-place AdamW update of a single array (``t`` is 1-based)."""
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * g * g
    if cfg.weight_decay:
        p *= 1.0 - lr * cfg.weight_decay
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    p -= lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def adamw_step(params: ModelParams, grads: ModelParams, state: AdamWState, lr: float,
               cfg: OptimizerConfig) -> ModelParams:
    """Update ``params`` in place and return them."""
    state.t += 1
    for (name, p), (_, g) in zip(params.named_arrays(), grads.named_arrays()):
        adamw_update(p, g, state.m.get(name), state.v.get(name), state.t, lr, cfg)
    return params
