"""Forward-process noise schedule for the denoising diffusion model.

Linear beta ramp over the training horizon; alpha_bar_t is the cumulative
signal retention, so the closed-form marginal of the forward process is
x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    betas: np.ndarray = field(init=False, repr=False, compare=False)
    alpha_bars: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("schedule needs at least one step")
        if not 0.0 < self.beta_start <= self.beta_end < 1.0:
            raise ValueError("betas must satisfy 0 < beta_start <= beta_end < 1")
        betas = np.linspace(self.beta_start, self.beta_end, self.steps,
                            dtype=np.float64)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bars", np.cumprod(1.0 - betas))

    def hash_hex(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.steps}:{self.beta_start!r}:{self.beta_end!r}".encode())
        h.update(self.betas.tobytes())
        return h.hexdigest()


def forward_noise(x0: np.ndarray, t, noise: np.ndarray,
                  schedule: NoiseSchedule) -> np.ndarray:
    """Closed-form forward sample x_t given clean signal and noise.

    ``t`` is an int for a single grid or an int array matching the leading
    batch axis; noise must have the shape of x0.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise)
    if noise.shape != x0.shape:
        raise ValueError(f"noise shape {noise.shape} != signal shape {x0.shape}")
    t_arr = np.asarray(t)
    if np.any(t_arr < 0) or np.any(t_arr >= schedule.steps):
        raise ValueError(f"timestep out of [0, {schedule.steps})")
    ab = schedule.alpha_bars[t_arr]
    if t_arr.ndim > 0:
        if t_arr.shape[0] != x0.shape[0]:
            raise ValueError("per-sample timesteps must match the batch axis")
        ab = ab.reshape((-1,) + (1,) * (x0.ndim - 1))
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise
