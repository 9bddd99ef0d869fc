"""Procedural box rooms with exact ground truth, and a ray-cast RGB-D renderer.

A room is an axis-aligned interior box wrapped in slabs of ``wall`` thickness
(floor below, ceiling above, walls around). Furniture are axis-aligned boxes
standing on the floor. Decals ("posters") are zero-thickness rectangles on
the back wall: they recolour the image but leave depth untouched, and in the
ground truth they claim the wall slab behind them as class "objects".
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..geometry import BinaryVolume, CameraIntrinsics, RigidTransform, VoxelGridSpec, camera_pose
from ..labels import (
    BED,
    CEILING,
    CHAIR,
    EMPTY,
    FLOOR,
    FURNITURE,
    IGNORE,
    OBJECTS,
    SOFA,
    TABLE,
    TVS,
    WALL,
    LabelVolume,
)

WALL_THICKNESS = 0.16

# nominal (width, height, depth) in meters per furniture class
BOX_SIZES = {
    CHAIR: (0.5, 0.9, 0.5),
    BED: (1.5, 0.55, 1.9),
    SOFA: (1.7, 0.8, 0.85),
    TABLE: (1.2, 0.75, 0.8),
    TVS: (1.0, 0.6, 0.15),
    FURNITURE: (0.9, 1.15, 0.5),
}

# surface ids used by the renderer
S_LEFT, S_RIGHT, S_FLOOR, S_CEIL, S_FRONT, S_BACK = range(6)
N_STRUCT = 6


def desk_intrinsics(width=320, height=240, focal=260.0) -> CameraIntrinsics:
    return CameraIntrinsics(focal, focal, (width - 1) / 2.0, (height - 1) / 2.0, width, height)


def _q8(rgb):
    """Quantize a colour to 8-bit levels so image files round-trip exactly."""
    return tuple(float(np.round(c * 255.0) / 255.0) for c in rgb)


def _luma(rgb):
    return 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple
    cls: int
    color: tuple


@dataclass(frozen=True)
class Decal:
    """Rectangle on the back wall plane: x in [x0, x1], y in [y0, y1]."""

    x0: float
    x1: float
    y0: float
    y1: float
    color: tuple
    cls: int = OBJECTS


@dataclass(frozen=True)
class SceneSpec:
    interior_lo: tuple
    interior_hi: tuple
    intrinsics: CameraIntrinsics
    pose: RigidTransform
    surface_colors: tuple  # one colour per structural surface id
    boxes: tuple = ()
    decals: tuple = ()
    wall: float = WALL_THICKNESS
    grid: VoxelGridSpec = field(default_factory=VoxelGridSpec.desk)
    seed: int = 0
    difficulty: float = 0.0

    @property
    def outer_lo(self):
        return tuple(v - self.wall for v in self.interior_lo)

    @property
    def outer_hi(self):
        return tuple(v + self.wall for v in self.interior_hi)

    def without_decals(self) -> "SceneSpec":
        return replace(self, decals=())

    def to_dict(self):
        return dict(
            interior_lo=list(self.interior_lo),
            interior_hi=list(self.interior_hi),
            intrinsics=self.intrinsics.to_dict(),
            pose=self.pose.to_dict(),
            surface_colors=[list(c) for c in self.surface_colors],
            boxes=[asdict(b) for b in self.boxes],
            decals=[asdict(d) for d in self.decals],
            wall=self.wall,
            grid=self.grid.to_dict(),
            seed=self.seed,
            difficulty=self.difficulty,
        )

    @classmethod
    def from_dict(cls, d):
        return cls(
            interior_lo=tuple(d["interior_lo"]),
            interior_hi=tuple(d["interior_hi"]),
            intrinsics=CameraIntrinsics(**d["intrinsics"]),
            pose=RigidTransform.from_dict(d["pose"]),
            surface_colors=tuple(tuple(c) for c in d["surface_colors"]),
            boxes=tuple(Box(tuple(b["lo"]), tuple(b["hi"]), b["cls"], tuple(b["color"])) for b in d["boxes"]),
            decals=tuple(Decal(**{**x, "color": tuple(x["color"])}) for x in d["decals"]),
            wall=d["wall"],
            grid=VoxelGridSpec.from_dict(d["grid"]),
            seed=d["seed"],
            difficulty=d["difficulty"],
        )


def _random_color(rng, lo=0.05, hi=0.95):
    return _q8(rng.uniform(lo, hi, size=3))


def _contrasting_color(rng, against, min_delta=0.3):
    for _ in range(200):
        c = _random_color(rng)
        if abs(_luma(c) - _luma(against)) >= min_delta:
            return c
    return _q8((0.05, 0.05, 0.05) if _luma(against) > 0.5 else (0.95, 0.95, 0.95))


def _overlaps(a_lo, a_hi, b_lo, b_hi, margin):
    return all(a_lo[i] < b_hi[i] + margin and b_lo[i] < a_hi[i] + margin for i in (0, 2))


def generate_scene(seed: int, difficulty: float = 0.5, grid: VoxelGridSpec | None = None, intrinsics=None) -> SceneSpec:
    """Deterministic scene from ``seed``.

    ``difficulty`` in [0, 1] scales the furniture count (up to 6) and the
    chance of a poster on the back wall. Difficulty 0 gives a bare room.
    """
    if not 0.0 <= difficulty <= 1.0:
        raise ValueError("difficulty must lie in [0, 1]")
    grid = grid or VoxelGridSpec.desk()
    k = intrinsics or desk_intrinsics()
    rng = np.random.default_rng(seed)
    ex = grid.extent
    org = grid.origin
    w = WALL_THICKNESS

    lo = (org[0] + rng.uniform(0.2, 0.5), org[1] + w, org[2] - 1.0)
    hi = (
        org[0] + ex[0] - rng.uniform(0.2, 0.5),
        lo[1] + rng.uniform(2.3, min(2.5, ex[1] - 2 * w - 0.02)),
        org[2] + rng.uniform(3.8, min(4.5, ex[2] - w - 0.02)),
    )

    cam_x = 0.5 * (lo[0] + hi[0]) + rng.uniform(-0.3, 0.3)
    cam = (cam_x, lo[1] + rng.uniform(1.2, 1.45), org[2] + rng.uniform(0.0, 0.2))
    pose = camera_pose(cam, pitch=rng.uniform(0.10, 0.20), yaw=rng.uniform(-0.1, 0.1))

    base = rng.uniform(0.55, 0.8)
    colors = [
        _q8(np.clip(base + rng.uniform(-0.08, 0.08, 3), 0, 1)),  # left
        _q8(np.clip(base - 0.12 + rng.uniform(-0.05, 0.05, 3), 0, 1)),  # right
        _q8((0.45 + rng.uniform(-0.1, 0.1), 0.32, 0.22)),  # floor
        _q8((0.93, 0.93, 0.93)),  # ceiling
        _q8(np.clip(base + rng.uniform(-0.08, 0.08, 3), 0, 1)),  # front
        _q8(np.clip(base + 0.1 + rng.uniform(-0.05, 0.05, 3), 0, 1)),  # back
    ]

    boxes = []
    n_max = int(round(6 * difficulty))
    n_boxes = int(rng.integers((n_max + 1) // 2, n_max + 1)) if n_max > 0 else 0
    classes = sorted(BOX_SIZES)
    for _ in range(n_boxes):
        for _attempt in range(50):
            cls = classes[int(rng.integers(len(classes)))]
            size = np.array(BOX_SIZES[cls]) * rng.uniform(0.8, 1.2, 3)
            if rng.random() < 0.5:
                size = size[[2, 1, 0]]  # rotate a quarter turn
            x_lo, x_hi = lo[0] + 0.05, hi[0] - 0.05 - size[0]
            z_lo, z_hi = org[2] + 1.2, hi[2] - 0.02 - size[2]
            if x_hi <= x_lo or z_hi <= z_lo:
                continue
            x = rng.uniform(x_lo, x_hi)
            z = rng.uniform(z_lo, z_hi)
            b_lo = (float(x), lo[1], float(z))
            b_hi = (float(x + size[0]), float(lo[1] + min(size[1], 1.0)), float(z + size[2]))
            if any(_overlaps(b_lo, b_hi, o.lo, o.hi, 0.1) for o in boxes):
                continue
            boxes.append(Box(b_lo, b_hi, cls, _contrasting_color(rng, colors[S_FLOOR], 0.15)))
            break

    decals = []
    if difficulty > 0 and rng.random() < difficulty:
        width = rng.uniform(0.7, 1.3)
        height = rng.uniform(0.45, 0.65)
        cx = cam_x + rng.uniform(-0.6, 0.6)
        x0 = float(np.clip(cx - width / 2, lo[0] + 0.1, hi[0] - 0.1 - width))
        y0 = lo[1] + rng.uniform(1.3, 1.4)
        decals.append(Decal(x0, x0 + width, y0, y0 + height, _contrasting_color(rng, colors[S_BACK], 0.3)))

    return SceneSpec(
        interior_lo=tuple(float(v) for v in lo),
        interior_hi=tuple(float(v) for v in hi),
        intrinsics=k,
        pose=pose,
        surface_colors=tuple(colors),
        boxes=tuple(boxes),
        decals=tuple(decals),
        grid=grid,
        seed=int(seed),
        difficulty=float(difficulty),
    )


def validate_scene(s: SceneSpec):
    """Raise ValueError when objects leave the room or decals leave the back wall."""
    lo, hi = np.array(s.interior_lo), np.array(s.interior_hi)
    for b in s.boxes:
        if np.any(np.array(b.lo) < lo - 1e-9) or np.any(np.array(b.hi) > hi + 1e-9):
            raise ValueError(f"box {b} leaves the room interior")
        if abs(b.lo[1] - lo[1]) > 1e-9:
            raise ValueError(f"box {b} does not stand on the floor")
    for d in s.decals:
        if not (lo[0] <= d.x0 < d.x1 <= hi[0] and lo[1] <= d.y0 < d.y1 <= hi[1]):
            raise ValueError(f"decal {d} leaves the back wall")
    cam = s.pose.translation
    if np.any(cam <= lo) or np.any(cam >= hi):
        raise ValueError("camera outside the room interior")


@dataclass(frozen=True)
class Sample:
    rgb: np.ndarray  # HxWx3 float64 in [0, 1], multiples of 1/255
    depth: np.ndarray  # HxW meters, 0 = missing
    gt: LabelVolume
    room: BinaryVolume
    pose: RigidTransform  # camera to grid frame
    intrinsics: CameraIntrinsics

    @property
    def spec(self):
        return self.gt.spec


def pixel_rays(k: CameraIntrinsics, pose: RigidTransform):
    """Ray directions in world frame with unit camera-z component, shape (H, W, 3)."""
    v, u = np.mgrid[0 : k.height, 0 : k.width].astype(np.float64)
    d_cam = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=-1)
    return d_cam @ pose.rotation.T


def _ray_hits(origin, dirs, s: SceneSpec):
    """Nearest hit parameter and surface id per ray (ids >= N_STRUCT are boxes)."""
    lo, hi = np.array(s.interior_lo), np.array(s.interior_hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        # exit of the interior box: per axis, the face ahead of the ray
        t_axis = np.where(dirs > 0, (hi - origin) * inv, np.where(dirs < 0, (lo - origin) * inv, np.inf))
    axis = np.argmin(t_axis, axis=-1)
    t = np.take_along_axis(t_axis, axis[..., None], -1)[..., 0]
    pos_side = np.take_along_axis(dirs, axis[..., None], -1)[..., 0] > 0
    face_of = np.array([[S_LEFT, S_RIGHT], [S_FLOOR, S_CEIL], [S_FRONT, S_BACK]])
    surf = face_of[axis, pos_side.astype(np.int64)]

    for i, b in enumerate(s.boxes):
        blo, bhi = np.array(b.lo), np.array(b.hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            t0 = (blo - origin) * inv
            t1 = (bhi - origin) * inv
        tmin = np.nanmax(np.minimum(t0, t1), axis=-1)
        tmax = np.nanmin(np.maximum(t0, t1), axis=-1)
        hit = (tmin <= tmax) & (tmin > 0) & (tmin < t)
        t = np.where(hit, tmin, t)
        surf = np.where(hit, N_STRUCT + i, surf)
    return t, surf


def render(s: SceneSpec) -> Sample:
    """Ray-cast depth and flat-shaded RGB, and label voxel centers by containment."""
    k = s.intrinsics
    cam = s.pose.translation
    lo, hi = np.array(s.interior_lo), np.array(s.interior_hi)
    if np.any(cam <= lo) or np.any(cam >= hi):
        raise ValueError("degenerate camera: it must sit strictly inside the room interior")
    if s.pose.rotation[:, 2] @ np.array([0.0, 0.0, 1.0]) <= 0:
        raise ValueError("degenerate camera: it must face +z")

    dirs = pixel_rays(k, s.pose)
    t, surf = _ray_hits(cam, dirs, s)
    depth = t  # camera-z component of every ray direction is 1

    palette = np.array(list(s.surface_colors) + [b.color for b in s.boxes], dtype=np.float64)
    rgb = palette[surf]
    if s.decals:
        pts = cam + dirs * t[..., None]
        on_back = surf == S_BACK
        for d in s.decals:
            m = on_back & (pts[..., 0] >= d.x0) & (pts[..., 0] <= d.x1) & (pts[..., 1] >= d.y0) & (pts[..., 1] <= d.y1)
            rgb[m] = d.color

    gt, room = label_volume(s)
    return Sample(rgb, depth, gt, room, s.pose, k)


def label_volume(s: SceneSpec):
    """Ground-truth labels and room mask on the scene grid (point-in-box on voxel centers)."""
    c = s.grid.centers()
    x, y, z = c[..., 0], c[..., 1], c[..., 2]
    lo, hi = s.interior_lo, s.interior_hi
    olo, ohi = s.outer_lo, s.outer_hi

    def inside(p_lo, p_hi):
        return (x >= p_lo[0]) & (x < p_hi[0]) & (y >= p_lo[1]) & (y < p_hi[1]) & (z >= p_lo[2]) & (z < p_hi[2])

    room = inside(olo, ohi)
    interior = inside(lo, hi)
    labels = np.full(s.grid.dims, IGNORE, dtype=np.uint8)
    labels[room] = WALL
    labels[room & (y < lo[1])] = FLOOR
    labels[room & (y >= hi[1])] = CEILING
    labels[interior] = EMPTY
    for b in s.boxes:
        labels[inside(b.lo, b.hi)] = b.cls
    for d in s.decals:
        labels[inside((d.x0, d.y0, hi[2]), (d.x1, d.y1, ohi[2]))] = d.cls
    return LabelVolume(labels, s.grid), BinaryVolume(room, s.grid)


def decal_boundary_pixels(s: SceneSpec, samples_per_meter=2000):
    """Integer (row, col) pixels covered by the projected outline of each decal."""
    k = s.intrinsics
    z = s.interior_hi[2]
    inv = s.pose.inverse()
    out = set()
    for d in s.decals:
        corners = [(d.x0, d.y0), (d.x1, d.y0), (d.x1, d.y1), (d.x0, d.y1)]
        for (ax, ay), (bx, by) in zip(corners, corners[1:] + corners[:1]):
            n = int(np.hypot(bx - ax, by - ay) * samples_per_meter) + 2
            f = np.linspace(0.0, 1.0, n)
            world = np.stack([ax + f * (bx - ax), ay + f * (by - ay), np.full(n, z)], axis=-1)
            u, v = k.project(inv.apply(world))
            col, row = np.floor(u + 0.5).astype(int), np.floor(v + 0.5).astype(int)
            ok = (col >= 0) & (col < k.width) & (row >= 0) & (row < k.height)
            out.update(zip(row[ok].tolist(), col[ok].tolist()))
    return out
