"""Sparse probabilistic 3D voxel map with log-odds updates.

Cells live in a dict keyed by voxel index; absent keys are unknown voxels at
the map prior. Every Bayesian update is an addition in log-odds space
(``L += logit(p) - logit(prior)``), clamped to the configured bounds, so
repeated evidence accumulates and the map can later be revised in either
direction.

Classification is three-way. Under the strict rule a voxel is Unknown unless
direct sensor evidence has touched it (`observed`); exploration and planning
use this rule so generative predictions never feed back into frontier
selection. Evaluation code may instead pass ``include_predicted=True``, which
treats any voxel whose log-odds has moved off the prior as informative.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Key, point_to_key, traverse_ray, traverse_segment


def logit(p: float) -> float:
    """log(p / (1 - p)); p must be strictly inside (0, 1)."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability out of (0, 1): {p}")
    return math.log(p / (1.0 - p))


def inv_logit(l: float) -> float:
    """Numerically safe logistic function."""
    if l >= 0:
        return 1.0 / (1.0 + math.exp(-l))
    e = math.exp(l)
    return e / (1.0 + e)


class VoxelState(enum.Enum):
    FREE = "free"
    OCCUPIED = "occupied"
    UNKNOWN = "unknown"


@dataclass
class VoxelCell:
    log_odds: float
    observed: bool = False


@dataclass(frozen=True)
class MergeConfig:
    """Probabilities and bounds for fusing sensor rays and predictions.

    ``p_sensor_*`` apply to direct measurements (ray hit / ray traversal),
    ``p_pred_*`` to generative predictions (predicted occupied / predicted
    free). The constructor enforces the trust ordering p_pred_hit <=
    p_sensor_hit. Clamp bounds are log-odds values.
    """

    p_sensor_hit: float = 0.7
    p_sensor_miss: float = 0.4
    p_pred_hit: float = 0.6
    p_pred_miss: float = 0.45
    prior: float = 0.5
    occupancy_threshold: float = 0.5
    l_min: float = field(default=math.log(0.12 / 0.88))
    l_max: float = field(default=math.log(0.97 / 0.03))

    def __post_init__(self):
        for name in ("p_sensor_hit", "p_sensor_miss", "p_pred_hit",
                     "p_pred_miss", "prior", "occupancy_threshold"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie strictly in (0, 1), got {v}")
        if self.p_pred_hit > self.p_sensor_hit:
            raise ValueError("p_pred_hit must not exceed p_sensor_hit "
                             "(the sensor is trusted more than the model)")
        if not self.l_min < self.l_max:
            raise ValueError("l_min must be below l_max")


@dataclass
class LocalGrid:
    """Dense cubic crop of a map around a center point.

    values: -1 free, +1 occupied, 0 unknown at crop time; known_mask marks
    voxels backed by direct observation. origin_key is the voxel key of the
    [0,0,0] corner cell, tying grid indices back to map keys.
    """

    center: np.ndarray
    half_extent: float
    resolution: float
    dim: int
    values: np.ndarray
    known_mask: np.ndarray
    origin_key: Key

    def key_at(self, ix: int, iy: int, iz: int) -> Key:
        return (self.origin_key[0] + ix, self.origin_key[1] + iy,
                self.origin_key[2] + iz)

    def same_geometry(self, other) -> bool:
        return (self.dim == other.dim
                and self.resolution == other.resolution
                and self.origin_key == other.origin_key)


def grid_dim(half_extent: float, resolution: float) -> int:
    return round(2.0 * half_extent / resolution)


class OccupancyMap:
    """Sparse voxel map storing per-cell log-odds and an observed flag."""

    def __init__(self, resolution: float = 0.1, prior: float = 0.5,
                 occupancy_threshold: float = 0.5):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        self.resolution = resolution
        self.prior = prior
        self.occupancy_threshold = occupancy_threshold
        self.logit_prior = logit(prior)
        self.cells: dict[Key, VoxelCell] = {}

    # -- queries ---------------------------------------------------------

    def cell(self, key: Key) -> VoxelCell | None:
        return self.cells.get(key)

    def probability(self, key: Key) -> float:
        cell = self.cells.get(key)
        if cell is None:
            return self.prior
        return inv_logit(cell.log_odds)

    def classify(self, key: Key, include_predicted: bool = False) -> VoxelState:
        """Three-way voxel state.

        Strict rule (default): Unknown unless observed, else thresholded on
        probability. With ``include_predicted`` a voxel also counts as
        informative when merged predictions moved its log-odds off the
        prior; evaluation and export use this to see prediction content.
        """
        cell = self.cells.get(key)
        if cell is None:
            return VoxelState.UNKNOWN
        if not cell.observed:
            if not include_predicted or cell.log_odds == self.logit_prior:
                return VoxelState.UNKNOWN
        if inv_logit(cell.log_odds) > self.occupancy_threshold:
            return VoxelState.OCCUPIED
        return VoxelState.FREE

    def raycast(self, origin, direction, max_range: float,
                include_predicted: bool = False) -> Key | None:
        """First Occupied voxel along the ray, or None after max_range."""
        for key, _, _ in traverse_ray(origin, direction, max_range,
                                      self.resolution):
            if self.classify(key, include_predicted) is VoxelState.OCCUPIED:
                return key
        return None

    def crop(self, center, half_extent: float,
             include_predicted: bool = False) -> LocalGrid:
        return crop_local(self, center, half_extent, include_predicted)

    # -- updates ---------------------------------------------------------

    def apply_evidence(self, key: Key, p: float, config: MergeConfig,
                       observe: bool) -> None:
        """Bayesian update of one voxel with a single evidence probability.

        In log-odds the piecewise update rule is the same addition for both
        branches; `observe` records sensor evidence, predictions leave the
        observed flag untouched.
        """
        cell = self.cells.get(key)
        if cell is None:
            cell = VoxelCell(log_odds=self.logit_prior)
            self.cells[key] = cell
        l = cell.log_odds + logit(p) - self.logit_prior
        cell.log_odds = min(max(l, config.l_min), config.l_max)
        if observe:
            cell.observed = True

    def copy(self) -> "OccupancyMap":
        dup = OccupancyMap(self.resolution, self.prior, self.occupancy_threshold)
        dup.cells = {k: VoxelCell(c.log_odds, c.observed)
                     for k, c in self.cells.items()}
        return dup

    def __len__(self) -> int:
        return len(self.cells)


def _check_prior(map_: OccupancyMap, config: MergeConfig) -> None:
    if abs(map_.prior - config.prior) > 1e-12:
        raise ValueError(
            f"map prior {map_.prior} does not match config prior {config.prior}")


def integrate_scan(map_: OccupancyMap, origin, endpoints,
                   config: MergeConfig) -> int:
    """Integrate one sensor scan: rays from origin to each hit endpoint.

    Voxels traversed before the endpoint get the sensor-miss update, the
    endpoint voxel the sensor-hit update; all touched voxels become
    observed. Zero-length rays are skipped and counted; the count is
    returned as the number of warnings.
    """
    _check_prior(map_, config)
    origin = np.asarray(origin, dtype=float)
    warnings = 0
    for endpoint in endpoints:
        endpoint = np.asarray(endpoint, dtype=float)
        if float(np.linalg.norm(endpoint - origin)) == 0.0:
            warnings += 1
            continue
        end_key = point_to_key(endpoint, map_.resolution)
        for key in traverse_segment(origin, endpoint, map_.resolution):
            if key != end_key:
                map_.apply_evidence(key, config.p_sensor_miss, config,
                                    observe=True)
        map_.apply_evidence(end_key, config.p_sensor_hit, config, observe=True)
    return warnings


def crop_local(source, center, half_extent: float,
               include_predicted: bool = False) -> LocalGrid:
    """Dense cubic crop of any classify-able source (map or overlay view).

    Requires half_extent > resolution. Free -> (-1, known), occupied ->
    (+1, known), unknown -> (0, not known).
    """
    res = source.resolution
    if half_extent <= res:
        raise ValueError("half_extent must exceed the voxel resolution")
    center = np.asarray(center, dtype=float)
    dim = grid_dim(half_extent, res)
    ck = point_to_key(center, res)
    origin_key = (ck[0] - dim // 2, ck[1] - dim // 2, ck[2] - dim // 2)
    values = np.zeros((dim, dim, dim), dtype=np.float64)
    known = np.zeros((dim, dim, dim), dtype=bool)
    for ix in range(dim):
        for iy in range(dim):
            for iz in range(dim):
                key = (origin_key[0] + ix, origin_key[1] + iy, origin_key[2] + iz)
                state = source.classify(key, include_predicted)
                if state is VoxelState.OCCUPIED:
                    values[ix, iy, iz] = 1.0
                    known[ix, iy, iz] = True
                elif state is VoxelState.FREE:
                    values[ix, iy, iz] = -1.0
                    known[ix, iy, iz] = True
    return LocalGrid(center=center, half_extent=half_extent, resolution=res,
                     dim=dim, values=values, known_mask=known,
                     origin_key=origin_key)


# -- serialization (VOXMAP text format) ----------------------------------

VOXMAP_VERSION = 1


def save_voxmap(map_: OccupancyMap, path) -> None:
    """Write the map as text: header then one `i j k log_odds observed` line
    per cell, sorted by key for reproducible output."""
    with open(path, "w") as fh:
        fh.write(f"VOXMAP {VOXMAP_VERSION} {map_.resolution!r} {map_.prior!r}\n")
        for key in sorted(map_.cells):
            c = map_.cells[key]
            fh.write(f"{key[0]} {key[1]} {key[2]} {c.log_odds!r} "
                     f"{1 if c.observed else 0}\n")


def load_voxmap(path) -> OccupancyMap:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "VOXMAP":
            raise ValueError(f"{path}: not a VOXMAP file")
        if int(header[1]) != VOXMAP_VERSION:
            raise ValueError(f"{path}: unsupported VOXMAP version {header[1]}")
        map_ = OccupancyMap(resolution=float(header[2]), prior=float(header[3]))
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            i, j, k = int(parts[0]), int(parts[1]), int(parts[2])
            map_.cells[(i, j, k)] = VoxelCell(float(parts[3]), parts[4] == "1")
    return map_
