"""Semantic label volumes shared by ground truth, predictions and metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .geometry import VoxelGridSpec

EMPTY = 0
IGNORE = 255
NUM_CLASSES = 12

# column names used in result tables, classes 1..11
CLASS_NAMES = ("ceil.", "floor", "wall", "win.", "chair", "bed", "sofa", "table", "tvs", "furn.", "objs.")

CEILING, FLOOR, WALL, WINDOW, CHAIR, BED, SOFA, TABLE, TVS, FURNITURE, OBJECTS = range(1, 12)


@dataclass(frozen=True)
class LabelVolume:
    values: np.ndarray  # uint8: 0 empty, 1..11 classes, 255 ignore
    spec: VoxelGridSpec

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.uint8)
        if v.shape != self.spec.dims:
            raise ShapeMismatchError(f"labels {v.shape} do not match grid {self.spec.dims}")
        bad = (v >= NUM_CLASSES) & (v != IGNORE)
        if bad.any():
            raise ValueError(f"label values outside 0..11 and {IGNORE}")
        object.__setattr__(self, "values", v)


def downsample_labels(labels: LabelVolume, factor: int = 4, min_fill: float = 0.05) -> LabelVolume:
    """Block-reduce labels by ``factor`` along every axis.

    A block whose voxels are mostly IGNORE becomes IGNORE. Otherwise it takes
    the most frequent non-empty class (lowest index on ties) when at least
    ``min_fill`` of the block is non-empty, else it is empty.
    """
    spec = labels.spec.coarsen(factor)
    nx, ny, nz = spec.dims
    blocks = labels.values.reshape(nx, factor, ny, factor, nz, factor).transpose(0, 2, 4, 1, 3, 5)
    blocks = blocks.reshape(nx, ny, nz, factor**3)
    size = factor**3
    counts = np.stack([(blocks == c).sum(axis=-1) for c in range(1, NUM_CLASSES)], axis=-1)
    ignored = (blocks == IGNORE).sum(axis=-1)
    filled = counts.sum(axis=-1)
    out = np.where(filled >= min_fill * size, counts.argmax(axis=-1) + 1, EMPTY).astype(np.uint8)
    out[ignored * 2 > size] = IGNORE
    return LabelVolume(out, spec)


def downsample_mask(mask, factor: int = 4, min_fraction: float = 0.5) -> np.ndarray:
    m = np.asarray(mask, dtype=bool)
    nx, ny, nz = (s // factor for s in m.shape)
    frac = m.reshape(nx, factor, ny, factor, nz, factor).mean(axis=(1, 3, 5))
    return frac >= min_fraction
