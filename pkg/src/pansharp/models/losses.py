"""Adversarial + l1 generator loss and the discriminator cross-entropy."""
from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatch, NonFiniteLoss

LOG_FLOOR = 1e-12


def _log(p):
    return np.log(np.maximum(p, LOG_FLOOR))


def generator_loss(d_fake, fused, reference, alpha: float = 1.0, beta: float = 100.0):
    """``-alpha * mean(log D(fake)) + beta * mean(|reference - fused|)``.

    Returns ``(loss, parts, grad_d_fake, grad_fused)`` where ``parts`` holds
    the unweighted ``adv`` and ``l1`` terms.
    """
    if fused.shape != reference.shape:
        raise DimensionMismatch(f"fused {fused.shape} and reference {reference.shape} differ")
    adv = -float(np.mean(_log(d_fake)))
    diff = reference - fused
    l1 = float(np.mean(np.abs(diff)))
    loss = alpha * adv + beta * l1
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"generator loss is {loss}")
    grad_d = np.where(d_fake > LOG_FLOOR, -alpha / (d_fake.size * np.maximum(d_fake, LOG_FLOOR)), 0.0)
    grad_fused = -beta * np.sign(diff) / diff.size
    return loss, {"adv": adv, "l1": l1}, grad_d, grad_fused


def discriminator_loss(d_real, d_fake):
    """``-mean(log D(real)) - mean(log(1 - D(fake)))`` with gradients for both maps."""
    loss = -float(np.mean(_log(d_real))) - float(np.mean(_log(1.0 - d_fake)))
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"discriminator loss is {loss}")
    grad_real = np.where(d_real > LOG_FLOOR, -1.0 / (d_real.size * np.maximum(d_real, LOG_FLOOR)), 0.0)
    one_minus = 1.0 - d_fake
    grad_fake = np.where(one_minus > LOG_FLOOR, 1.0 / (d_fake.size * np.maximum(one_minus, LOG_FLOOR)), 0.0)
    return loss, grad_real, grad_fake


def discriminator_loss_as_printed(d_real, d_fake) -> float:
    """``mean(1 - log D(fake) + log D(real))`` exactly as typeset.

    Diagnostic only: minimising it drives D(real) towards 0, so it is never
    used for training.
    """
    return float(np.mean(1.0 - _log(d_fake)) + np.mean(_log(d_real)))
