"""Voxel indexing and exact ray/segment traversal over an axis-aligned grid.

A voxel key (i, j, k) names the cell [i*res, (i+1)*res) x ... ; keys are a
bijection onto the cells, so ``point_to_key`` is plain floor division.
Traversal uses incremental integer grid stepping (one axis advance per
boundary crossing), which visits every cell a segment intersects exactly
once, in order, with entry/exit distances.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

Key = tuple[int, int, int]


def point_to_key(point, resolution: float) -> Key:
    """Voxel key containing ``point`` (floor of coordinate / resolution)."""
    return (
        math.floor(point[0] / resolution),
        math.floor(point[1] / resolution),
        math.floor(point[2] / resolution),
    )


def key_center(key: Key, resolution: float) -> np.ndarray:
    """World-space center of the voxel named by ``key``."""
    return (np.asarray(key, dtype=float) + 0.5) * resolution


def traverse_ray(origin, direction, max_distance: float, resolution: float
                 ) -> Iterator[tuple[Key, float, float]]:
    """Walk the voxels a ray crosses, yielding (key, t_enter, t_exit).

    ``direction`` must be nonzero; it is normalized internally, so the t
    values are metric distances along the ray. The walk stops once the next
    cell would be entered at or beyond ``max_distance``; t_exit of the last
    cell is capped at ``max_distance``.
    """
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    norm = float(np.linalg.norm(d))
    if norm == 0.0:
        raise ValueError("ray direction must be nonzero")
    d = d / norm

    key = [math.floor(o[a] / resolution) for a in range(3)]
    step = [0, 0, 0]
    t_max = [math.inf] * 3   # distance at which the ray crosses the next boundary per axis
    t_delta = [math.inf] * 3
    for a in range(3):
        if d[a] > 0.0:
            step[a] = 1
            boundary = (key[a] + 1) * resolution
            t_max[a] = (boundary - o[a]) / d[a]
            t_delta[a] = resolution / d[a]
        elif d[a] < 0.0:
            step[a] = -1
            boundary = key[a] * resolution
            t_max[a] = (boundary - o[a]) / d[a]
            t_delta[a] = -resolution / d[a]

    t_enter = 0.0
    while t_enter < max_distance:
        axis = 0
        if t_max[1] < t_max[axis]:
            axis = 1
        if t_max[2] < t_max[axis]:
            axis = 2
        t_exit = t_max[axis]
        yield (key[0], key[1], key[2]), t_enter, min(t_exit, max_distance)
        key[axis] += step[axis]
        t_max[axis] += t_delta[axis]
        t_enter = t_exit


def traverse_segment(origin, end, resolution: float) -> list[Key]:
    """Keys of every voxel the segment origin->end intersects, in order.

    A zero-length segment yields just the voxel containing the point.
    """
    o = np.asarray(origin, dtype=float)
    e = np.asarray(end, dtype=float)
    seg = e - o
    length = float(np.linalg.norm(seg))
    if length == 0.0:
        return [point_to_key(o, resolution)]
    return [key for key, _, _ in traverse_ray(o, seg, length, resolution)]


def fibonacci_directions(n: int) -> np.ndarray:
    """n near-uniform unit directions on the sphere (deterministic lattice)."""
    if n < 1:
        raise ValueError("need at least one direction")
    i = np.arange(n, dtype=float)
    z = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    golden = math.pi * (3.0 - math.sqrt(5.0))
    phi = golden * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
