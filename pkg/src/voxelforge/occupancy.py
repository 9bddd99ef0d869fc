"""Three-state occupancy grid and the stochastic loss weights derived from it."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .geometry import BinaryVolume
from .labels import EMPTY, IGNORE, LabelVolume
from .tsdf import Visibility, VisibilityVolume


class Occupancy(enum.IntEnum):
    OTHER = 0
    OCCUPIED_IN = 1
    OCCLUDED_FREE_IN = 2


@dataclass(frozen=True)
class OccupancyGrid:
    """Occupancy states plus the visibility and room mask they were built from.

    The evaluation domains in ``metrics`` need to tell occluded occupied
    voxels from visible ones, so the inputs travel with the grid.
    """

    values: np.ndarray  # uint8 Occupancy codes
    visibility: VisibilityVolume
    room: BinaryVolume

    @property
    def spec(self):
        return self.room.spec

    @property
    def occupied(self) -> np.ndarray:
        return self.values == Occupancy.OCCUPIED_IN

    @property
    def occluded(self) -> np.ndarray:
        return self.values == Occupancy.OCCLUDED_FREE_IN


def build_occupancy_grid(gt: LabelVolume, vis: VisibilityVolume, room: BinaryVolume) -> OccupancyGrid:
    if not (gt.spec == vis.spec == room.spec):
        raise ShapeMismatchError("label, visibility and room volumes use different grids")
    g = gt.values
    inside = room.values & (g != IGNORE)
    occupied = inside & (g != EMPTY) & (vis.values != Visibility.OUTSIDE_VIEW)
    occluded = inside & (g == EMPTY) & (vis.values == Visibility.OCCLUDED)
    values = np.full(g.shape, Occupancy.OTHER, dtype=np.uint8)
    values[occupied] = Occupancy.OCCUPIED_IN
    values[occluded] = Occupancy.OCCLUDED_FREE_IN
    return OccupancyGrid(values, vis, room)


def balance_ratio(n_occupied: int, n_occluded: int) -> float:
    """Keep probability for free occluded voxels, ``min(1, 2 * occupied / occluded)``."""
    if n_occluded == 0:
        return 1.0
    return min(1.0, 2.0 * n_occupied / n_occluded)


def balance_weights(grid, seed) -> np.ndarray:
    """Binary weights: every occupied voxel plus a random subset of free occluded ones.

    ``grid`` is an OccupancyGrid or a raw array of Occupancy codes (any
    shape, e.g. a stacked batch). Deterministic for a given seed.
    """
    values = grid.values if isinstance(grid, OccupancyGrid) else np.asarray(grid)
    occu = values == Occupancy.OCCUPIED_IN
    occl = values == Occupancy.OCCLUDED_FREE_IN
    r = balance_ratio(int(occu.sum()), int(occl.sum()))
    rng = np.random.default_rng(seed)
    keep = rng.random(values.shape) < r
    return (occu | (occl & keep)).astype(np.float32)
