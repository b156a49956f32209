"""Numpy building blocks for the 3D denoiser, with explicit backward passes.

Tensors are (B, C, D, H, W). Convolutions run stride 1 with same-padding and
are evaluated as a sum over kernel offsets of batched channel matmuls, which
keeps memory linear in the input size instead of materializing an im2col
buffer. Every backward here is validated against central finite differences
by the gradient-check operation.
"""

from __future__ import annotations

import math

import numpy as np


def conv3d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-padded stride-1 3D convolution.

    x: (B, C, D, H, W); w: (O, C, k, k, k) with odd k; b: (O,).
    """
    k = w.shape[2]
    pad = k // 2
    B, C, D, H, W = x.shape
    O = w.shape[0]
    if pad:
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad), (pad, pad)))
    else:
        xp = x
    out = np.zeros((B, O, D * H * W), dtype=x.dtype)
    for a in range(k):
        for bb in range(k):
            for c in range(k):
                patch = xp[:, :, a:a + D, bb:bb + H, c:c + W]
                patch = np.ascontiguousarray(patch).reshape(B, C, -1)
                # (O, C) @ (B, C, V) -> (B, O, V)
                out += np.matmul(w[:, :, a, bb, c], patch)
    out = out.reshape(B, O, D, H, W)
    return out + b.reshape(1, O, 1, 1, 1)


def conv3d_backward(x: np.ndarray, w: np.ndarray, gy: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (gx, gw, gb) of conv3d for upstream gradient gy."""
    k = w.shape[2]
    pad = k // 2
    B, C, D, H, W = x.shape
    O = w.shape[0]
    if pad:
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad), (pad, pad)))
    else:
        xp = x
    gy_flat = np.ascontiguousarray(gy).reshape(B, O, -1)
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    for a in range(k):
        for bb in range(k):
            for c in range(k):
                patch = xp[:, :, a:a + D, bb:bb + H, c:c + W]
                patch_flat = np.ascontiguousarray(patch).reshape(B, C, -1)
                # dW[o, c] = sum_{b,v} gy[b, o, v] * x[b, c, v]
                gw[:, :, a, bb, c] = np.einsum("bov,bcv->oc", gy_flat,
                                               patch_flat, optimize=True)
                # dx accumulates W^T applied to gy at the same offset
                gpatch = np.matmul(w[:, :, a, bb, c].T, gy_flat)
                gxp[:, :, a:a + D, bb:bb + H, c:c + W] += \
                    gpatch.reshape(B, C, D, H, W)
    if pad:
        gx = gxp[:, :, pad:-pad, pad:-pad, pad:-pad]
    else:
        gx = gxp
    gb = gy.sum(axis=(0, 2, 3, 4))
    return np.ascontiguousarray(gx), gw, gb


def avgpool2(x: np.ndarray) -> np.ndarray:
    """2x2x2 average pooling; spatial dims must be even."""
    B, C, D, H, W = x.shape
    return x.reshape(B, C, D // 2, 2, H // 2, 2, W // 2, 2).mean(axis=(3, 5, 7))


def avgpool2_backward(gy: np.ndarray) -> np.ndarray:
    """Spread each pooled gradient evenly over its 8 source voxels."""
    g = gy / 8.0
    g = np.repeat(np.repeat(np.repeat(g, 2, axis=2), 2, axis=3), 2, axis=4)
    return g


def upsample2(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbor 2x upsampling along all spatial axes."""
    return np.repeat(np.repeat(np.repeat(x, 2, axis=2), 2, axis=3), 2, axis=4)


def upsample2_backward(gy: np.ndarray) -> np.ndarray:
    """Sum gradients over each 2x2x2 block (adjoint of repeat)."""
    B, C, D, H, W = gy.shape
    return gy.reshape(B, C, D // 2, 2, H // 2, 2, W // 2, 2).sum(axis=(3, 5, 7))


def silu(x: np.ndarray) -> np.ndarray:
    """x * sigmoid(x); smooth, so finite-difference checks behave."""
    return x / (1.0 + np.exp(-x))


def silu_backward(x: np.ndarray, gy: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-x))
    return gy * (s + x * s * (1.0 - s))


def timestep_embedding(t: np.ndarray, dim: int, max_period: float = 10000.0
                       ) -> np.ndarray:
    """Sinusoidal embedding of integer timesteps, shape (B, dim)."""
    if dim % 2:
        raise ValueError("embedding dimension must be even")
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / half)
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)
