"""Pinhole camera, rigid transforms and the world-to-voxel mapping.

Axis convention used by every volumetric stage: grid x runs horizontally,
y is vertical (up) and z is depth. Volumes are numpy arrays indexed
``[ix, iy, iz]``. The camera frame is the usual pinhole frame (x right,
y down, z forward), so the identity-pitch camera-to-world rotation is
``diag(-1, -1, 1)``: looking along +z with world y up, world x grows to the
camera's left.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatchError

CANONICAL_EXTENT = (4.8, 2.88, 4.8)
CANONICAL_VOXEL_SIZE = 0.02
CANONICAL_TRUNCATION = 0.24
DESK_VOXEL_SIZE = 0.08


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def project(self, p_cam):
        """Camera-frame points (..., 3) to continuous pixel coordinates (u, v)."""
        p = np.asarray(p_cam, dtype=np.float64)
        z = p[..., 2]
        return self.fx * p[..., 0] / z + self.cx, self.fy * p[..., 1] / z + self.cy

    def to_dict(self):
        return dict(fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy, width=self.width, height=self.height)


@dataclass(frozen=True)
class RigidTransform:
    """Maps points from a source frame (usually camera) into the world/grid frame."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9, rtol=0):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation must have determinant +1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def to_dict(self):
        return dict(rotation=self.rotation.tolist(), translation=self.translation.tolist())

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["rotation"]), np.array(d["translation"]))


def camera_pose(position, pitch=0.0, yaw=0.0) -> RigidTransform:
    """Camera-to-world pose for a camera looking along world +z.

    ``pitch`` > 0 tilts the view downwards, ``yaw`` > 0 turns it towards +x.
    Angles in radians.
    """
    base = np.diag([-1.0, -1.0, 1.0])
    cp, sp = np.cos(pitch), np.sin(pitch)
    # rotation about world x; positive pitch sends +z towards -y
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    cy, sy = np.cos(yaw), np.sin(yaw)
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    return RigidTransform(ry @ rx @ base, np.asarray(position, dtype=np.float64))


@dataclass(frozen=True)
class VoxelGridSpec:
    origin: tuple = (0.0, 0.0, 0.0)
    voxel_size: float = DESK_VOXEL_SIZE
    dims: tuple = (60, 36, 60)

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.origin) != 3 or len(self.dims) != 3:
            raise ValueError("origin and dims must have three components")
        if not self.voxel_size > 0:
            raise ValueError("voxel_size must be positive")
        if min(self.dims) <= 0:
            raise ValueError("dims must be positive")

    @classmethod
    def from_extent(cls, extent, voxel_size, origin=(0.0, 0.0, 0.0)) -> "VoxelGridSpec":
        dims = tuple(int(round(e / voxel_size)) for e in extent)
        return cls(origin, voxel_size, dims)

    @classmethod
    def canonical(cls, origin=(0.0, 0.0, 0.0)) -> "VoxelGridSpec":
        return cls.from_extent(CANONICAL_EXTENT, CANONICAL_VOXEL_SIZE, origin)

    @classmethod
    def desk(cls, origin=(0.0, 0.0, 0.0)) -> "VoxelGridSpec":
        return cls.from_extent(CANONICAL_EXTENT, DESK_VOXEL_SIZE, origin)

    @property
    def extent(self):
        return tuple(d * self.voxel_size for d in self.dims)

    def truncation_voxels(self, truncation=CANONICAL_TRUNCATION) -> int:
        return int(round(truncation / self.voxel_size))

    def coarsen(self, factor: int) -> "VoxelGridSpec":
        if any(d % factor for d in self.dims):
            raise ShapeMismatchError(f"dims {self.dims} not divisible by {factor}")
        return VoxelGridSpec(self.origin, self.voxel_size * factor, tuple(d // factor for d in self.dims))

    def centers(self) -> np.ndarray:
        """World coordinates of every voxel center, shape (nx, ny, nz, 3)."""
        axes = [self.origin[a] + (np.arange(self.dims[a]) + 0.5) * self.voxel_size for a in range(3)]
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        return np.stack([gx, gy, gz], axis=-1)

    def voxel_center(self, index) -> np.ndarray:
        return np.asarray(self.origin) + (np.asarray(index, dtype=np.float64) + 0.5) * self.voxel_size

    def to_dict(self):
        return dict(origin=list(self.origin), voxel_size=self.voxel_size, dims=list(self.dims))

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["origin"]), d["voxel_size"], tuple(d["dims"]))


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    skipped: int = 0

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(p)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", p)

    def __len__(self):
        return len(self.points)


def check_depth(depth) -> np.ndarray:
    d = np.asarray(depth, dtype=np.float64)
    if d.ndim != 2:
        raise ShapeMismatchError("depth map must be 2-D")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise ValueError("depth values must be finite and non-negative")
    return d


def unproject_pixel(u, v, d, k: CameraIntrinsics) -> np.ndarray:
    if not d > 0:
        raise ValueError(f"depth must be positive, got {d}")
    if not (0 <= u < k.width and 0 <= v < k.height):
        raise ValueError(f"pixel ({u}, {v}) outside a {k.width}x{k.height} image")
    return np.array([(u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d], dtype=np.float64)


def unproject_pixels(us, vs, ds, k: CameraIntrinsics) -> np.ndarray:
    us = np.asarray(us, dtype=np.float64)
    vs = np.asarray(vs, dtype=np.float64)
    ds = np.asarray(ds, dtype=np.float64)
    return np.stack([(us - k.cx) * ds / k.fx, (vs - k.cy) * ds / k.fy, ds], axis=-1)


def masked_point_cloud(mask, depth, k: CameraIntrinsics, t: RigidTransform) -> PointCloud:
    """Unproject pixels selected by ``mask`` that carry a depth reading."""
    d = check_depth(depth)
    if d.shape != (k.height, k.width):
        raise ShapeMismatchError(f"depth {d.shape} does not match intrinsics {(k.height, k.width)}")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != d.shape:
        raise ShapeMismatchError(f"mask {mask.shape} does not match depth {d.shape}")
    valid = mask & (d > 0)
    vs, us = np.nonzero(valid)
    pts = unproject_pixels(us, vs, d[vs, us], k)
    return PointCloud(t.apply(pts), skipped=int(np.count_nonzero(mask & ~valid)))


def depth_to_point_cloud(depth, k: CameraIntrinsics, t: RigidTransform) -> PointCloud:
    d = check_depth(depth)
    return masked_point_cloud(np.ones(d.shape, dtype=bool), d, k, t)


def world_to_voxel(p, spec: VoxelGridSpec):
    idx = np.floor((np.asarray(p, dtype=np.float64) - spec.origin) / spec.voxel_size).astype(np.int64)
    if np.any(idx < 0) or np.any(idx >= spec.dims):
        return None
    return tuple(int(i) for i in idx)


def points_to_indices(points, spec: VoxelGridSpec):
    """Vectorised ``world_to_voxel``: returns (indices of in-grid points, in-grid mask)."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    idx = np.floor((p - spec.origin) / spec.voxel_size).astype(np.int64)
    inside = np.all((idx >= 0) & (idx < np.asarray(spec.dims)), axis=1)
    return idx[inside], inside


@dataclass(frozen=True)
class BinaryVolume:
    values: np.ndarray
    spec: VoxelGridSpec
    dropped: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=bool)
        if v.shape != self.spec.dims:
            raise ShapeMismatchError(f"volume {v.shape} does not match grid {self.spec.dims}")
        object.__setattr__(self, "values", v)

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.values))


def voxelize(pc: PointCloud, spec: VoxelGridSpec) -> BinaryVolume:
    vol = np.zeros(spec.dims, dtype=bool)
    idx, inside = points_to_indices(pc.points, spec)
    vol[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    return BinaryVolume(vol, spec, dropped=int(len(inside) - np.count_nonzero(inside)))
