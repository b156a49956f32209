"""Finite-difference validation of the hand-written backward pass."""

from __future__ import annotations

import numpy as np

from .model import Denoiser


def gradient_check(model: Denoiser, x_t: np.ndarray, t: np.ndarray,
                   noise: np.ndarray, n_params: int = 200, h: float = 1e-4,
                   seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Perturbs ``n_params`` randomly chosen entries of the parameter vector by
    +-h and compares (L+ - L-) / 2h against the backward pass. The model
    must be float64 and small (intended for configurations under ~5k
    parameters).
    """
    if model.config.dtype != "float64":
        raise ValueError("gradient checking requires a float64 model")

    def loss_of(theta: np.ndarray) -> float:
        model.set_theta(theta)
        pred = model.forward(x_t, t)
        d = pred - noise
        return float(np.mean(d * d))

    base = model.theta()
    _, grads = model.loss_and_grads(x_t, t, noise)
    analytic = model.grads_theta(grads)

    rng = np.random.default_rng(seed)
    n_params = min(n_params, base.size)
    idx = rng.choice(base.size, size=n_params, replace=False)
    max_rel = 0.0
    for i in idx:
        theta = base.copy()
        theta[i] = base[i] + h
        lp = loss_of(theta)
        theta[i] = base[i] - h
        lm = loss_of(theta)
        numeric = (lp - lm) / (2.0 * h)
        denom = max(abs(numeric), abs(analytic[i]), 1e-8)
        max_rel = max(max_rel, abs(numeric - analytic[i]) / denom)
    model.set_theta(base)
    return max_rel
