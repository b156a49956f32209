"""Noise-prediction network: a small 3D conv encoder-decoder.

Two downsampling stages with skip connections back to matching resolutions,
a sinusoidal timestep embedding projected and added per stage, SiLU
activations, and a 1x1x1 output head. Forward and backward passes are
written out explicitly (no autodiff framework); the backward pass is
verified against central finite differences.

Parameter layout is a flat dict of named arrays; ``theta``/``set_theta``
give a packed view in a fixed canonical order for checkpoints, the
optimizer, and the gradient checker.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .layers import (avgpool2, avgpool2_backward, conv3d, conv3d_backward,
                     silu, silu_backward, timestep_embedding, upsample2,
                     upsample2_backward)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DenoiserConfig:
    grid_dim: int = 16
    channels: tuple[int, int, int] = (8, 16, 32)
    emb_dim: int = 32
    dtype: str = "float32"  # float64 for gradient checking

    def __post_init__(self):
        if self.grid_dim % 4 != 0 or self.grid_dim < 4:
            raise ValueError("grid_dim must be a positive multiple of 4")
        if len(self.channels) != 3 or min(self.channels) < 1:
            raise ValueError("channels must be three positive widths")
        if self.emb_dim % 2 != 0:
            raise ValueError("emb_dim must be even")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")


class Denoiser:
    """Predicts the forward-process noise of a (dim, dim, dim) grid."""

    def __init__(self, config: DenoiserConfig, seed: int = 0):
        self.config = config
        c1, c2, c3 = config.channels
        e = config.emb_dim
        dt = np.dtype(config.dtype)
        rng = np.random.default_rng(seed)

        def conv_w(o, c, k):
            scale = 1.0 / np.sqrt(c * k ** 3)
            return (rng.standard_normal((o, c, k, k, k)) * scale).astype(dt)

        def emb_w(c):
            return (rng.standard_normal((e, c)) / np.sqrt(e)).astype(dt)

        self.params: dict[str, np.ndarray] = {
            "enc1_w": conv_w(c1, 1, 3), "enc1_b": np.zeros(c1, dt),
            "temb1_w": emb_w(c1), "temb1_b": np.zeros(c1, dt),
            "enc2_w": conv_w(c2, c1, 3), "enc2_b": np.zeros(c2, dt),
            "temb2_w": emb_w(c2), "temb2_b": np.zeros(c2, dt),
            "mid_w": conv_w(c3, c2, 3), "mid_b": np.zeros(c3, dt),
            "temb3_w": emb_w(c3), "temb3_b": np.zeros(c3, dt),
            "dec2_w": conv_w(c2, c3 + c2, 3), "dec2_b": np.zeros(c2, dt),
            "temb4_w": emb_w(c2), "temb4_b": np.zeros(c2, dt),
            "dec1_w": conv_w(c1, c2 + c1, 3), "dec1_b": np.zeros(c1, dt),
            "temb5_w": emb_w(c1), "temb5_b": np.zeros(c1, dt),
            "out_w": conv_w(1, c1, 1), "out_b": np.zeros(1, dt),
        }
        self.param_names = list(self.params)
        self.param_count = sum(p.size for p in self.params.values())
        log.debug("denoiser constructed: dim=%d channels=%s params=%d",
                  config.grid_dim, config.channels, self.param_count)

    # -- parameter vector ------------------------------------------------

    def theta(self) -> np.ndarray:
        return np.concatenate([self.params[n].ravel() for n in self.param_names])

    def set_theta(self, vec: np.ndarray) -> None:
        if vec.size != self.param_count:
            raise ValueError(f"parameter vector size {vec.size} != "
                             f"{self.param_count}")
        pos = 0
        dt = np.dtype(self.config.dtype)
        for n in self.param_names:
            p = self.params[n]
            self.params[n] = vec[pos:pos + p.size].astype(dt).reshape(p.shape)
            pos += p.size

    # -- forward / backward ---------------------------------------------

    def _stage(self, x, t_emb, wname, tname):
        p = self.params
        h = conv3d(x, p[wname + "_w"], p[wname + "_b"])
        proj = t_emb @ p[tname + "_w"] + p[tname + "_b"]
        h = h + proj[:, :, None, None, None]
        return h, silu(h)

    def forward(self, x: np.ndarray, t: np.ndarray,
                with_cache: bool = False):
        """Noise prediction for batch x (B, dim, dim, dim), timesteps t (B,).

        With ``with_cache`` also returns the intermediates needed by
        ``backward``.
        """
        dt = np.dtype(self.config.dtype)
        d = self.config.grid_dim
        x = np.asarray(x, dtype=dt)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != (d, d, d):
            raise ValueError(f"input grid shape {x.shape[1:]} != ({d},{d},{d})")
        xb = x[:, None]  # (B, 1, D, D, D)
        t_emb = timestep_embedding(t, self.config.emb_dim).astype(dt)
        c2, c3 = self.config.channels[1], self.config.channels[2]

        h1, a1 = self._stage(xb, t_emb, "enc1", "temb1")
        p1 = avgpool2(a1)
        h2, a2 = self._stage(p1, t_emb, "enc2", "temb2")
        p2 = avgpool2(a2)
        h3, a3 = self._stage(p2, t_emb, "mid", "temb3")
        u2 = upsample2(a3)
        cat2 = np.concatenate([u2, a2], axis=1)
        h4, a4 = self._stage(cat2, t_emb, "dec2", "temb4")
        u1 = upsample2(a4)
        cat1 = np.concatenate([u1, a1], axis=1)
        h5, a5 = self._stage(cat1, t_emb, "dec1", "temb5")
        y = conv3d(a5, self.params["out_w"], self.params["out_b"])
        out = y[:, 0]
        if not with_cache:
            return out
        cache = dict(xb=xb, t_emb=t_emb, h1=h1, a1=a1, p1=p1, h2=h2, a2=a2,
                     p2=p2, h3=h3, cat2=cat2, h4=h4, cat1=cat1, h5=h5, a5=a5,
                     c2=c2, c3=c3)
        return out, cache

    def backward(self, cache: dict, gout: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients for upstream gradient gout (B, D, D, D)."""
        p = self.params
        grads: dict[str, np.ndarray] = {}
        t_emb = cache["t_emb"]
        c2, c3 = cache["c2"], cache["c3"]

        def stage_back(h, x_in, gy, wname, tname):
            gh = silu_backward(h, gy)
            gproj = gh.sum(axis=(2, 3, 4))  # (B, C)
            grads[tname + "_w"] = t_emb.T @ gproj
            grads[tname + "_b"] = gproj.sum(axis=0)
            gx, gw, gb = conv3d_backward(x_in, p[wname + "_w"], gh)
            grads[wname + "_w"] = gw
            grads[wname + "_b"] = gb
            return gx

        gy = np.asarray(gout, dtype=p["out_w"].dtype)[:, None]
        ga5, grads["out_w"], grads["out_b"] = conv3d_backward(
            cache["a5"], p["out_w"], gy)
        gcat1 = stage_back(cache["h5"], cache["cat1"], ga5, "dec1", "temb5")
        gu1, ga1_skip = gcat1[:, :c2], gcat1[:, c2:]
        ga4 = upsample2_backward(gu1)
        gcat2 = stage_back(cache["h4"], cache["cat2"], ga4, "dec2", "temb4")
        gu2, ga2_skip = gcat2[:, :c3], gcat2[:, c3:]
        ga3 = upsample2_backward(gu2)
        gp2 = stage_back(cache["h3"], cache["p2"], ga3, "mid", "temb3")
        ga2 = avgpool2_backward(gp2) + ga2_skip
        gp1 = stage_back(cache["h2"], cache["p1"], ga2, "enc2", "temb2")
        ga1 = avgpool2_backward(gp1) + ga1_skip
        stage_back(cache["h1"], cache["xb"], ga1, "enc1", "temb1")
        return grads

    def loss_and_grads(self, x_t: np.ndarray, t: np.ndarray,
                       noise: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        """MSE between predicted and true noise, plus parameter gradients."""
        pred, cache = self.forward(x_t, t, with_cache=True)
        noise = np.asarray(noise, dtype=pred.dtype)
        diff = pred - noise
        loss = float(np.mean(diff * diff))
        gout = (2.0 / diff.size) * diff
        return loss, self.backward(cache, gout)

    def grads_theta(self, grads: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([grads[n].ravel() for n in self.param_names])
