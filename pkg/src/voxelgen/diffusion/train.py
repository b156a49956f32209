"""Denoiser training: noise-prediction MSE with Adam and a warmup+cosine
learning-rate schedule.

Each step draws a shuffled mini-batch of complete local grids, a uniform
timestep per sample, and fresh Gaussian noise; the model regresses the
noise. Runs are deterministic given the config seed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model import Denoiser, DenoiserConfig
from .schedule import NoiseSchedule, forward_noise

log = logging.getLogger(__name__)


class TrainingDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 250
    warmup_steps: int = 500
    lr_min: float = 1e-6
    lr_max: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.lr_min <= 0 or self.lr_max <= 0:
            raise ValueError("learning rates must be positive")


@dataclass
class TrainResult:
    model: Denoiser
    trace: list[tuple[int, float, float]] = field(default_factory=list)


def learning_rate(step: int, total_steps: int, config: TrainConfig) -> float:
    """Linear warmup from lr_min to lr_max, then cosine decay to zero."""
    if step < config.warmup_steps:
        frac = (step + 1) / config.warmup_steps
        return config.lr_min + (config.lr_max - config.lr_min) * frac
    remaining = max(total_steps - config.warmup_steps, 1)
    progress = (step - config.warmup_steps) / remaining
    return config.lr_max * 0.5 * (1.0 + math.cos(math.pi * progress))


class _Adam:
    def __init__(self, model: Denoiser, beta1=0.9, beta2=0.999, eps=1e-8):
        self.model = model
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {n: np.zeros_like(p) for n, p in model.params.items()}
        self.v = {n: np.zeros_like(p) for n, p in model.params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for n, p in self.model.params.items():
            g = grads[n].astype(p.dtype)
            self.m[n] = self.beta1 * self.m[n] + (1 - self.beta1) * g
            self.v[n] = self.beta2 * self.v[n] + (1 - self.beta2) * g * g
            update = (self.m[n] / b1c) / (np.sqrt(self.v[n] / b2c) + self.eps)
            p -= (lr * update).astype(p.dtype)


def train(dataset: np.ndarray, schedule: NoiseSchedule, config: TrainConfig,
          model: Denoiser | None = None,
          arch: DenoiserConfig | None = None) -> TrainResult:
    """Train a denoiser on complete local grids (N, dim, dim, dim) in [-1, 1].

    Returns the trained model and the loss trace [(step, loss, lr), ...].
    Aborts with TrainingDivergence when the loss stays above 10x the
    initial loss for 100 consecutive steps.
    """
    dataset = np.asarray(dataset, dtype=np.float64)
    if dataset.ndim != 4 or dataset.shape[0] == 0:
        raise ValueError("dataset must be a nonempty (N, dim, dim, dim) array")
    if np.max(np.abs(dataset)) > 1.0 + 1e-9:
        raise ValueError("dataset values must lie in [-1, 1]")
    dim = dataset.shape[1]
    if dataset.shape[1:] != (dim, dim, dim):
        raise ValueError("grids must be cubic")

    ss = np.random.SeedSequence(config.seed)
    init_ss, data_ss = ss.spawn(2)
    if model is None:
        if arch is None:
            arch = DenoiserConfig(grid_dim=dim)
        model = Denoiser(arch, seed=init_ss.generate_state(1)[0])
    if model.config.grid_dim != dim:
        raise ValueError(f"model grid_dim {model.config.grid_dim} != "
                         f"dataset dim {dim}")

    n = dataset.shape[0]
    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    if total_steps > 0 and config.warmup_steps >= total_steps:
        raise ValueError("warmup_steps must be below the total step count")

    rng = np.random.default_rng(data_ss)
    opt = _Adam(model)
    trace: list[tuple[int, float, float]] = []
    initial_loss = None
    high_loss_run = 0
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for b in range(steps_per_epoch):
            batch = dataset[order[b * config.batch_size:
                                  (b + 1) * config.batch_size]]
            t = rng.integers(0, schedule.steps, size=batch.shape[0])
            noise = rng.standard_normal(batch.shape)
            x_t = forward_noise(batch, t, noise, schedule)
            loss, grads = model.loss_and_grads(x_t, t, noise)
            lr = learning_rate(step, total_steps, config)
            opt.step(grads, lr)
            trace.append((step, loss, lr))
            if initial_loss is None:
                initial_loss = loss
            if loss > 10.0 * initial_loss:
                high_loss_run += 1
                if high_loss_run >= 100:
                    raise TrainingDivergence(
                        f"loss {loss:.4g} above 10x initial "
                        f"{initial_loss:.4g} for 100 consecutive steps "
                        f"(step {step})")
            else:
                high_loss_run = 0
            step += 1
        if trace:
            log.debug("epoch done: step=%d loss=%.4f", step, trace[-1][1])
    return TrainResult(model=model, trace=trace)


def save_loss_trace(trace: list[tuple[int, float, float]], path) -> None:
    with open(path, "w") as fh:
        fh.write("step,loss,lr\n")
        for step, loss, lr in trace:
            fh.write(f"{step},{loss!r},{lr!r}\n")
