from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch
from .graph import ParameterStore


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"learning rate must be > 0, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")


def adam_step(store: ParameterStore, grads: dict[str, np.ndarray], cfg: AdamConfig) -> None:
    """One bias-corrected Adam update, in place, for every parameter in ``grads``."""
    for name, g in grads.items():
        theta = store.params[name]
        if g.shape != theta.shape:
            raise ShapeMismatch(f"gradient for {name} has shape {g.shape}, parameter {theta.shape}")
        m, v, t = store.state.get(name) or (np.zeros_like(theta), np.zeros_like(theta), 0)
        t += 1
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        m_hat = m / (1.0 - cfg.beta1 ** t)
        v_hat = v / (1.0 - cfg.beta2 ** t)
        theta -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
        store.state[name] = (m, v, t)
