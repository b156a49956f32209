"""Fusing generative occupancy predictions into a running map.

Two strategies:

* probabilistic merging -- every prediction is Bayesian evidence. For a
  voxel outside the observed set the posterior odds multiply by
  odds(p_pred) / odds(prior), i.e. log-odds gain logit(p) - logit(prior),
  identical in form to a sensor update. Observed voxels are never touched
  by predictions, so sensor history alone determines them.
* one-shot merging -- a non-destructive overlay view in which the latest
  prediction's occupied voxels (where the map is unknown) read as occupied
  with probability 1; installing a new prediction discards the previous
  one and the underlying map never changes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Key
from .occupancy import (LocalGrid, MergeConfig, OccupancyMap, VoxelState,
                        _check_prior, crop_local)


@dataclass
class PredictionGrid:
    """Binary occupied/free prediction over the geometry of a LocalGrid."""

    center: np.ndarray
    half_extent: float
    resolution: float
    dim: int
    origin_key: Key
    occupied: np.ndarray  # bool, (dim, dim, dim)

    @classmethod
    def like(cls, grid: LocalGrid, occupied: np.ndarray) -> "PredictionGrid":
        occupied = np.asarray(occupied, dtype=bool)
        if occupied.shape != (grid.dim,) * 3:
            raise ValueError("prediction shape does not match grid geometry")
        return cls(center=grid.center, half_extent=grid.half_extent,
                   resolution=grid.resolution, dim=grid.dim,
                   origin_key=grid.origin_key, occupied=occupied)

    def same_geometry(self, other) -> bool:
        return (self.dim == other.dim
                and self.resolution == other.resolution
                and self.origin_key == other.origin_key)


def _check_geometry(crop: LocalGrid, pred: PredictionGrid) -> None:
    if not pred.same_geometry(crop):
        raise ValueError("prediction geometry does not match the crop "
                         f"(crop dim {crop.dim} at {crop.origin_key}, "
                         f"pred dim {pred.dim} at {pred.origin_key})")


def merge_prediction(map_: OccupancyMap, crop: LocalGrid,
                     pred: PredictionGrid, config: MergeConfig) -> None:
    """Merge one prediction into the map under the piecewise update rule.

    Only voxels the crop saw as unknown (known_mask false) are updated:
    predicted-occupied with p_pred_hit, predicted-free with p_pred_miss.
    The observed flag stays false, so these voxels remain out of the
    observed set for frontier purposes.
    """
    _check_geometry(crop, pred)
    _check_prior(map_, config)
    dim = crop.dim
    mask = crop.known_mask
    occ = pred.occupied
    for ix in range(dim):
        for iy in range(dim):
            for iz in range(dim):
                if mask[ix, iy, iz]:
                    continue
                p = config.p_pred_hit if occ[ix, iy, iz] else config.p_pred_miss
                map_.apply_evidence(crop.key_at(ix, iy, iz), p, config,
                                    observe=False)


def merge_multi(map_: OccupancyMap, crop: LocalGrid,
                preds: list[PredictionGrid], config: MergeConfig) -> None:
    """Sequentially merge a batch of predictions sharing one crop.

    Log-odds addition commutes, so the final state is the sum of the
    per-prediction updates (clamped); outlier voxels predicted occupied in
    few samples end up classified free.
    """
    for pred in preds:
        merge_prediction(map_, crop, pred, config)


class OneShotOverlay:
    """Non-destructive 'latest prediction wins' view over a map.

    The overlay holds the set of map-unknown voxels the current prediction
    marks occupied; they classify as Occupied with probability 1. The view
    exposes the same query surface as OccupancyMap (resolution / classify /
    probability / crop), so metrics and export code can treat it as a map.
    """

    def __init__(self, base: OccupancyMap):
        self.base = base
        self._occupied: set[Key] = set()

    @property
    def resolution(self) -> float:
        return self.base.resolution

    @property
    def occupancy_threshold(self) -> float:
        return self.base.occupancy_threshold

    def install(self, crop: LocalGrid, pred: PredictionGrid) -> None:
        """Replace the previous prediction with a new one."""
        _check_geometry(crop, pred)
        occupied: set[Key] = set()
        dim = crop.dim
        for ix in range(dim):
            for iy in range(dim):
                for iz in range(dim):
                    if crop.known_mask[ix, iy, iz]:
                        continue
                    if pred.occupied[ix, iy, iz]:
                        occupied.add(crop.key_at(ix, iy, iz))
        self._occupied = occupied

    def clear(self) -> None:
        self._occupied = set()

    def classify(self, key: Key, include_predicted: bool = False) -> VoxelState:
        if key in self._occupied:
            return VoxelState.OCCUPIED
        return self.base.classify(key, include_predicted)

    def probability(self, key: Key) -> float:
        if key in self._occupied:
            return 1.0
        return self.base.probability(key)

    def crop(self, center, half_extent: float,
             include_predicted: bool = False) -> LocalGrid:
        return crop_local(self, center, half_extent, include_predicted)

    def overlay_keys(self) -> set[Key]:
        return set(self._occupied)


def merge_one_shot(map_: OccupancyMap, crop: LocalGrid,
                   pred: PredictionGrid,
                   view: OneShotOverlay | None = None) -> OneShotOverlay:
    """Install a prediction as a one-shot overlay view.

    Passing an existing view replaces its contents (the previous prediction
    is fully removed); otherwise a fresh view over ``map_`` is returned.
    """
    if view is None:
        view = OneShotOverlay(map_)
    elif view.base is not map_:
        raise ValueError("overlay view belongs to a different map")
    view.install(crop, pred)
    return view
