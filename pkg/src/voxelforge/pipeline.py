"""From a rendered RGB-D sample to network inputs and coarse training targets.

Inputs (surface and edge F-TSDF) live on the sample grid. Targets, the
occupancy grid and the evaluation masks live on the network output grid,
which is four times coarser along every axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .edges import DEFAULT_SIGMA, DEFAULT_T_HIGH, DEFAULT_T_LOW, canny, edges_to_point_cloud
from .errors import ShapeMismatchError
from .geometry import CANONICAL_TRUNCATION, BinaryVolume, VoxelGridSpec, depth_to_point_cloud, voxelize
from .labels import LabelVolume, downsample_labels, downsample_mask
from .occupancy import OccupancyGrid, build_occupancy_grid
from .tsdf import TsdfVolume, VisibilityVolume, compute_visibility, encode_channel

OUTPUT_FACTOR = 4


@dataclass(frozen=True)
class CannyParams:
    sigma: float = DEFAULT_SIGMA
    t_low: float = DEFAULT_T_LOW
    t_high: float = DEFAULT_T_HIGH

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0 < self.t_low < self.t_high:
            raise ValueError("need 0 < t_low < t_high")


@dataclass(frozen=True)
class PreparedSample:
    surface: TsdfVolume
    edge: TsdfVolume
    spec: VoxelGridSpec  # input grid
    gt: LabelVolume  # output grid
    grid: OccupancyGrid  # output grid, carries visibility and room

    def __post_init__(self):
        if not self.surface.values.shape == self.edge.values.shape == self.spec.dims:
            raise ShapeMismatchError("surface and edge volumes do not match the input grid")
        if self.gt.spec != self.grid.spec:
            raise ShapeMismatchError("labels and occupancy grid use different grids")

    def inputs(self, zero_edges=False) -> np.ndarray:
        """(2, nx, ny, nz) float32: surface then edge channel."""
        edge = np.zeros_like(self.edge.values) if zero_edges else self.edge.values
        return np.stack([self.surface.values, edge]).astype(np.float32)


def coarse_targets(sample, depth_points=None, factor=OUTPUT_FACTOR):
    """Labels, room mask, visibility and occupancy grid on the output grid.

    Visibility is classified directly on the coarse voxels, against a surface
    occupancy voxelized at that resolution.
    """
    coarse = sample.spec.coarsen(factor)
    pc = depth_points if depth_points is not None else depth_to_point_cloud(sample.depth, sample.intrinsics, sample.pose)
    gt = downsample_labels(sample.gt, factor)
    room = BinaryVolume(downsample_mask(sample.room.values, factor), coarse)
    vis = compute_visibility(sample.depth, sample.intrinsics, sample.pose, coarse, voxelize(pc, coarse))
    return gt, build_occupancy_grid(gt, vis, room)


def prepare_sample(sample, canny_params: CannyParams | None = None, truncation=CANONICAL_TRUNCATION) -> PreparedSample:
    cp = canny_params or CannyParams()
    spec = sample.spec
    k, pose = sample.intrinsics, sample.pose
    pc = depth_to_point_cloud(sample.depth, k, pose)
    vis = compute_visibility(sample.depth, k, pose, spec, voxelize(pc, spec))
    surface = encode_channel(pc, vis, spec, truncation, "SURFACE")
    mask = canny(sample.rgb, cp.sigma, cp.t_low, cp.t_high)
    edge = encode_channel(edges_to_point_cloud(mask, sample.depth, k, pose), vis, spec, truncation, "EDGE")
    gt, grid = coarse_targets(sample, pc)
    return PreparedSample(surface, edge, spec, gt, grid)


def full_visibility(sample) -> VisibilityVolume:
    """Visibility on the sample grid (used by tests and PLY export)."""
    pc = depth_to_point_cloud(sample.depth, sample.intrinsics, sample.pose)
    return compute_visibility(sample.depth, sample.intrinsics, sample.pose, sample.spec, voxelize(pc, sample.spec))
