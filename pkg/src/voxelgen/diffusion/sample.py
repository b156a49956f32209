"""Reverse-process sampling with occupancy inpainting.

The sampler runs an ancestral update over a strictly decreasing subsequence
of the training timesteps (30 by default). Before every model call, voxels
the crop observed are overwritten with a forward-noised copy of their
observed values at the current timestep, so observations steer the
prediction at every step and can never be contradicted; after the loop the
observed values are written back verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..merge import PredictionGrid
from ..occupancy import LocalGrid
from .model import Denoiser
from .schedule import NoiseSchedule, forward_noise


@dataclass(frozen=True)
class SamplerConfig:
    inference_steps: int = 30
    seed: int = 0
    inject_noise: bool = True
    clip_denoised: bool = True
    threshold: float = 0.0
    step_indices: tuple[int, ...] | None = None  # overrides the uniform stride

    def timesteps(self, total_steps: int) -> np.ndarray:
        if self.step_indices is not None:
            ts = np.asarray(self.step_indices, dtype=int)
        else:
            if not 1 <= self.inference_steps <= total_steps:
                raise ValueError("inference_steps must lie in [1, schedule steps]")
            ts = np.unique(np.linspace(0, total_steps - 1,
                                       self.inference_steps).round()
                           .astype(int))[::-1]
        if np.any(ts < 0) or np.any(ts >= total_steps):
            raise ValueError("step indices out of range")
        if np.any(np.diff(ts) >= 0):
            raise ValueError("step indices must be strictly decreasing")
        return ts


def sample_inpaint(model: Denoiser, schedule: NoiseSchedule, crop: LocalGrid,
                   config: SamplerConfig) -> PredictionGrid:
    """Draw one occupancy prediction for the crop's geometry.

    Observed voxels of the output always equal the crop's observed values;
    unknown voxels are generated. The result is binarized at the configured
    threshold (0 by default, the midpoint of the -1/+1 encoding).
    """
    dim = model.config.grid_dim
    if crop.dim != dim:
        raise ValueError(f"crop dim {crop.dim} does not match model grid "
                         f"dim {dim}")
    rng = np.random.default_rng(config.seed)
    obs = crop.values.astype(np.float64)
    mask = crop.known_mask
    ab = schedule.alpha_bars
    ts = config.timesteps(schedule.steps)

    x = rng.standard_normal((dim, dim, dim))
    for i, t in enumerate(ts):
        # keep observed voxels on the forward trajectory of their values
        inpaint_noise = rng.standard_normal(x.shape)
        x_obs = forward_noise(obs, int(t), inpaint_noise, schedule)
        x = np.where(mask, x_obs, x)

        eps = model.forward(x[None], np.array([t]))[0].astype(np.float64)
        x0_hat = (x - np.sqrt(1.0 - ab[t]) * eps) / np.sqrt(ab[t])
        if config.clip_denoised:
            x0_hat = np.clip(x0_hat, -1.0, 1.0)
        if i + 1 == len(ts):
            x = x0_hat
        else:
            tp = ts[i + 1]
            a_eff = ab[t] / ab[tp]
            beta_eff = 1.0 - a_eff
            coef0 = np.sqrt(ab[tp]) * beta_eff / (1.0 - ab[t])
            coeft = np.sqrt(a_eff) * (1.0 - ab[tp]) / (1.0 - ab[t])
            x = coef0 * x0_hat + coeft * x
            if config.inject_noise:
                var = beta_eff * (1.0 - ab[tp]) / (1.0 - ab[t])
                x = x + np.sqrt(var) * rng.standard_normal(x.shape)
        if not np.all(np.isfinite(x)):
            raise RuntimeError(
                f"non-finite sampler state (seed={config.seed}, step index "
                f"{i}, timestep {int(t)})")

    x = np.where(mask, obs, x)  # exact restoration of observations
    return PredictionGrid.like(crop, x > config.threshold)
