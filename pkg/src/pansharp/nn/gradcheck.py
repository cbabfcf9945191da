"""Central finite-difference checks of analytic gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .graph import ComputeGraph

FP_EPS = np.finfo(np.float64).eps


def relative_error(analytic: float, numeric: float, noise: float = 0.0) -> float:
    """``|a - n| / max(|a|, |n|)``.

    A discrepancy no larger than ``noise``, the rounding bound of the finite
    difference, is indistinguishable from agreement and scores 0. This is
    what makes exactly-zero derivatives (a bias feeding batch norm) checkable.
    """
    diff = abs(analytic - numeric)
    if diff <= noise:
        return 0.0
    return diff / max(abs(analytic), abs(numeric))


def check_coordinates(
    objective: Callable[[], tuple[float, float, np.ndarray]],
    params: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    eps: float = 1e-6,
    coords: dict[str, np.ndarray] | None = None,
) -> tuple[float, int, int]:
    """Compare ``analytic`` with central differences of ``objective``.

    ``objective()`` returns ``(loss, magnitude, kink_signature)`` where
    ``magnitude`` bounds the absolute size of the summed terms (it sets the
    rounding floor). A coordinate whose perturbation changes the kink
    signature straddles a non-differentiable point and is excluded.

    Returns ``(max_rel_err, checked, excluded)``.
    """
    worst, checked, excluded = 0.0, 0, 0
    for name, theta in params.items():
        flat = theta.reshape(-1)
        g = analytic[name].reshape(-1)
        idx = range(flat.size) if coords is None else coords[name]
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            lp, mag_p, sig_p = objective()
            flat[i] = orig - eps
            lm, mag_m, sig_m = objective()
            flat[i] = orig
            if sig_p.shape != sig_m.shape or not np.array_equal(sig_p, sig_m):
                excluded += 1
                continue
            numeric = (lp - lm) / (2 * eps)
            noise = 64 * FP_EPS * max(mag_p, mag_m) / eps
            worst = max(worst, relative_error(float(g[i]), numeric, noise))
            checked += 1
    return worst, checked, excluded


def grad_check(
    graph: ComputeGraph,
    inputs: dict[str, np.ndarray],
    eps: float = 1e-6,
    seed: int = 0,
    training: bool = True,
    max_coords: int | None = None,
    return_counts: bool = False,
):
    """Max relative error between backward() and central differences.

    The scalar objective is a fixed random projection of every graph output.
    With ``max_coords`` each parameter contributes at most that many randomly
    chosen coordinates; otherwise every coordinate is perturbed. Coordinates
    whose perturbation flips a (leaky) ReLU input sign are excluded.
    """
    rng = np.random.default_rng(seed)
    outs = graph.forward(inputs, training=training)
    proj = {k: rng.standard_normal(v.shape) for k, v in outs.items()}
    analytic = graph.backward(proj)
    saved = {k: v.copy() for k, v in graph.params.params.items() if k not in graph.params.trainable}

    def objective():
        res = graph.forward(inputs, training=training)
        loss = sum(float(np.sum(proj[k] * v)) for k, v in res.items())
        mag = sum(float(np.sum(np.abs(proj[k] * v))) for k, v in res.items())
        return loss, mag, graph.kink_signature()

    params = {k: graph.params.params[k] for k in sorted(graph.params.trainable)}
    coords = None
    if max_coords is not None:
        coords = {
            k: rng.choice(v.size, size=min(max_coords, v.size), replace=False)
            for k, v in params.items()
        }
    result = check_coordinates(objective, params, analytic, eps, coords)
    for k, v in saved.items():
        graph.params.params[k][...] = v
    return result if return_counts else result[0]
