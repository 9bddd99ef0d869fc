"""Camera visibility, exact squared EDT, TSDF and flipped-TSDF encodings."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit, prange
from .errors import EmptyVolumeError, ShapeMismatchError
from .geometry import (
    CANONICAL_TRUNCATION,
    BinaryVolume,
    CameraIntrinsics,
    PointCloud,
    RigidTransform,
    VoxelGridSpec,
    check_depth,
    voxelize,
)

__all__ = [
    "BinaryVolume",
    "Visibility",
    "VisibilityVolume",
    "TsdfVolume",
    "compute_visibility",
    "edt3_squared",
    "tsdf_encode",
    "flip_values",
    "flip_tsdf",
    "encode_channel",
]


class Visibility(enum.IntEnum):
    VISIBLE_FREE = 0
    OCCLUDED = 1
    OCCUPIED = 2
    OUTSIDE_VIEW = 3


@dataclass(frozen=True)
class VisibilityVolume:
    values: np.ndarray  # uint8 codes from Visibility
    spec: VoxelGridSpec

    def __post_init__(self):
        if self.values.shape != self.spec.dims:
            raise ShapeMismatchError(f"visibility {self.values.shape} does not match grid {self.spec.dims}")

    def count(self, label: Visibility) -> int:
        return int(np.count_nonzero(self.values == label))


def compute_visibility(
    depth,
    k: CameraIntrinsics,
    t: RigidTransform,
    spec: VoxelGridSpec,
    occupied: BinaryVolume,
) -> VisibilityVolume:
    """Classify every voxel center against the observed depth along its pixel ray.

    ``t`` maps camera to grid coordinates. The surface band is +-voxel_size/2
    around the observed depth (z-depth, same convention as the depth map).
    """
    d = check_depth(depth)
    if d.shape != (k.height, k.width):
        raise ShapeMismatchError(f"depth {d.shape} does not match intrinsics {(k.height, k.width)}")
    if occupied.spec != spec:
        raise ShapeMismatchError("occupancy volume uses a different grid")

    out = np.empty(spec.dims, dtype=np.uint8)
    half = 0.5 * spec.voxel_size
    ys = spec.origin[1] + (np.arange(spec.dims[1]) + 0.5) * spec.voxel_size
    zs = spec.origin[2] + (np.arange(spec.dims[2]) + 0.5) * spec.voxel_size
    gy, gz = np.meshgrid(ys, zs, indexing="ij")
    # one x slab at a time keeps memory flat on the canonical grid
    for ix in range(spec.dims[0]):
        x = spec.origin[0] + (ix + 0.5) * spec.voxel_size
        world = np.stack([np.full_like(gy, x), gy, gz], axis=-1)
        cam = (world - t.translation) @ t.rotation
        z = cam[..., 2]
        front = z > 0
        zs_safe = np.where(front, z, 1.0)
        u = np.floor(k.fx * cam[..., 0] / zs_safe + k.cx + 0.5)
        v = np.floor(k.fy * cam[..., 1] / zs_safe + k.cy + 0.5)
        on_image = front & (u >= 0) & (u < k.width) & (v >= 0) & (v < k.height)
        ui = np.where(on_image, u, 0).astype(np.int64)
        vi = np.where(on_image, v, 0).astype(np.int64)
        obs = np.where(on_image, d[vi, ui], 0.0)
        seen = on_image & (obs > 0)

        slab = np.full(gy.shape, Visibility.OUTSIDE_VIEW, dtype=np.uint8)
        free = seen & (z < obs - half)
        hidden = seen & (z > obs + half)
        band = seen & ~free & ~hidden
        slab[free] = Visibility.VISIBLE_FREE
        slab[hidden] = Visibility.OCCLUDED
        occ = occupied.values[ix]
        slab[band & occ] = Visibility.OCCUPIED
        slab[band & ~occ] = Visibility.VISIBLE_FREE
        out[ix] = slab
    return VisibilityVolume(out, spec)


# ---------------------------------------------------------------- distance


@njit(cache=True)
def _envelope_line(f, n, v, z, out):
    # lower envelope of parabolas rooted at the finite samples of f
    k = -1
    for q in range(n):
        if f[q] == np.inf:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -np.inf
            z[1] = np.inf
            continue
        fq = f[q] + q * q
        s = 0.0
        while True:
            p = v[k]
            s = (fq - (f[p] + p * p)) / (2.0 * (q - p))
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    if k < 0:
        for q in range(n):
            out[q] = np.inf
        return
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        dq = q - v[k]
        out[q] = dq * dq + f[v[k]]


@njit(parallel=True, cache=True)
def _edt_lines_numba(lines):
    n_lines, n = lines.shape
    out = np.empty_like(lines)
    for li in prange(n_lines):
        v = np.empty(n, dtype=np.int64)
        z = np.empty(n + 1, dtype=np.float64)
        _envelope_line(lines[li], n, v, z, out[li])
    return out


def _edt_lines_numpy(lines, chunk_bytes=32 << 20):
    # exact min-plus convolution with (i - j)^2, vectorised over line chunks
    n_lines, n = lines.shape
    idx = np.arange(n, dtype=np.float64)
    sq = (idx[:, None] - idx[None, :]) ** 2
    out = np.empty_like(lines)
    step = max(1, chunk_bytes // (8 * n * n))
    for s in range(0, n_lines, step):
        blk = lines[s : s + step]
        out[s : s + step] = np.min(blk[:, None, :] + sq[None, :, :], axis=2)
    return out


def _edt_axis(f, axis):
    moved = np.moveaxis(f, axis, -1)
    shape = moved.shape
    lines = np.ascontiguousarray(moved.reshape(-1, shape[-1]))
    if _accel.use_numba():
        res = _edt_lines_numba(lines)
    else:
        res = _edt_lines_numpy(lines)
    return np.moveaxis(res.reshape(shape), -1, axis)


def edt3_squared(b) -> np.ndarray:
    """Exact squared Euclidean distance (voxel units) to the nearest occupied voxel.

    Three separable 1-D passes; every result is an integer held in float64.
    """
    occ = b.values if isinstance(b, BinaryVolume) else np.asarray(b, dtype=bool)
    if not occ.any():
        raise EmptyVolumeError("distance transform of a volume with no occupied voxel")
    f = np.where(occ, 0.0, np.inf)
    for axis in range(occ.ndim):
        f = _edt_axis(f, axis)
    return f


# ------------------------------------------------------------------- tsdf


@dataclass(frozen=True)
class TsdfVolume:
    values: np.ndarray
    kind: str = "TSDF"  # or "FTSDF"
    channel: str = "SURFACE"  # or "EDGE"
    empty: bool = False

    def __post_init__(self):
        if self.kind not in ("TSDF", "FTSDF"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.channel not in ("SURFACE", "EDGE"):
            raise ValueError(f"unknown channel {self.channel!r}")


def tsdf_encode(b: BinaryVolume, vis: VisibilityVolume, truncation=CANONICAL_TRUNCATION, channel="SURFACE") -> TsdfVolume:
    if not truncation > 0:
        raise ValueError("truncation must be positive")
    if vis.spec != b.spec:
        raise ShapeMismatchError("visibility and occupancy use different grids")
    dist = b.spec.voxel_size * np.sqrt(edt3_squared(b))
    mag = np.minimum(dist / truncation, 1.0)
    positive = (vis.values == Visibility.VISIBLE_FREE) | (vis.values == Visibility.OCCUPIED)
    values = np.where(positive, mag, -mag).astype(np.float32)
    return TsdfVolume(values, "TSDF", channel)


def flip_values(x):
    """sign(x) * (1 - |x|) with sign(0) taken as +1."""
    x = np.asarray(x)
    sign = np.where(x < 0, -1, 1).astype(x.dtype)
    return sign * (1 - np.abs(x))


def flip_tsdf(v: TsdfVolume) -> TsdfVolume:
    if v.kind != "TSDF":
        raise ValueError("volume is already flipped")
    return TsdfVolume(flip_values(v.values), "FTSDF", v.channel, v.empty)


def encode_channel(
    points: PointCloud,
    vis: VisibilityVolume,
    spec: VoxelGridSpec,
    truncation=CANONICAL_TRUNCATION,
    channel="SURFACE",
) -> TsdfVolume:
    """Voxelize a channel's points and encode them as F-TSDF.

    Distances go to this channel's own occupied voxels; the sign comes from
    the shared camera visibility. A channel with no in-grid point encodes as
    all zeros and sets ``empty``.
    """
    b = voxelize(points, spec)
    if b.count == 0:
        warnings.warn(f"{channel.lower()} channel has no occupied voxel", RuntimeWarning, stacklevel=2)
        return TsdfVolume(np.zeros(spec.dims, dtype=np.float32), "FTSDF", channel, empty=True)
    return flip_tsdf(tsdf_encode(b, vis, truncation, channel))
