"""On-disk formats: EVOX volumes, PPM/PGM images, PLY voxel meshes, manifests.

EVOX layout (all little-endian)::

    4s   magic "EVOX"
    u32  version (1)
    u32  dtype code: 1 = u8 labels/masks, 2 = f32 scalars
    3u32 dims nx, ny, nz
    3f64 origin (m)
    f64  voxel size (m)
    ...  nx*ny*nz values, x fastest, then y, then z
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..geometry import VoxelGridSpec
from ..labels import IGNORE, NUM_CLASSES

log = logging.getLogger(__name__)

EVOX_MAGIC = b"EVOX"
EVOX_VERSION = 1
_EVOX_HEADER = struct.Struct("<4sIIIII4d")
EVOX_HEADER_SIZE = _EVOX_HEADER.size
DTYPE_U8 = 1
DTYPE_F32 = 2
_DTYPES = {DTYPE_U8: np.dtype("<u1"), DTYPE_F32: np.dtype("<f4")}

MAX_DEPTH_MM = 65535


class BadMagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


def write_volume(path, values, spec: VoxelGridSpec):
    """Write a u8 (bool/uint8) or f32 (float) volume."""
    v = np.asarray(values)
    if v.shape != spec.dims:
        raise ValueError(f"volume {v.shape} does not match grid {spec.dims}")
    if v.dtype == np.bool_ or v.dtype == np.uint8:
        code = DTYPE_U8
    elif np.issubdtype(v.dtype, np.floating):
        code = DTYPE_F32
    else:
        raise TypeError(f"unsupported volume dtype {v.dtype}")
    header = _EVOX_HEADER.pack(EVOX_MAGIC, EVOX_VERSION, code, *spec.dims, *spec.origin, spec.voxel_size)
    body = v.astype(_DTYPES[code]).tobytes(order="F")
    Path(path).write_bytes(header + body)


def read_volume(path):
    """Return (values, spec); u8 volumes come back as uint8, f32 as float32."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != EVOX_MAGIC:
        raise BadMagicError(f"{path}: not an EVOX file")
    if len(raw) < EVOX_HEADER_SIZE:
        raise TruncatedFileError(f"{path}: header truncated")
    _, version, code, nx, ny, nz, ox, oy, oz, vs = _EVOX_HEADER.unpack_from(raw)
    if version != EVOX_VERSION:
        raise VersionError(f"{path}: unsupported EVOX version {version}")
    if code not in _DTYPES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    dt = _DTYPES[code]
    n = nx * ny * nz * dt.itemsize
    if len(raw) - EVOX_HEADER_SIZE != n:
        raise TruncatedFileError(f"{path}: expected {n} data bytes, found {len(raw) - EVOX_HEADER_SIZE}")
    values = np.frombuffer(raw, dtype=dt, offset=EVOX_HEADER_SIZE).reshape((nx, ny, nz), order="F")
    return values.astype(dt.newbyteorder("="), copy=True), VoxelGridSpec((ox, oy, oz), vs, (nx, ny, nz))


# ------------------------------------------------------------------ images


def _read_netpbm(path, magic: bytes):
    raw = Path(path).read_bytes()
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: malformed header")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace before the raster
    if tokens[0] != magic:
        raise FormatError(f"{path}: expected {magic.decode()} image, found {tokens[0][:2]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise FormatError(f"{path}: malformed header") from e
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise FormatError(f"{path}: malformed header")
    return raw[pos:], width, height, maxval


def write_rgb(path, rgb):
    """Write an HxWx3 image with values in [0, 1] as 8-bit binary PPM."""
    img = np.asarray(rgb, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("expected an HxWx3 image")
    data = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    h, w, _ = data.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + data.tobytes())


def read_rgb(path) -> np.ndarray:
    body, w, h, maxval = _read_netpbm(path, b"P6")
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PPM is supported")
    if len(body) < w * h * 3:
        raise FormatError(f"{path}: raster truncated")
    data = np.frombuffer(body[: w * h * 3], dtype=np.uint8).reshape(h, w, 3)
    return data.astype(np.float64) / 255.0


def write_depth(path, depth):
    """Write depth in meters as 16-bit big-endian PGM holding millimeters."""
    d = np.asarray(depth, dtype=np.float64)
    mm = np.round(d * 1000.0)
    if np.any(mm > MAX_DEPTH_MM):
        log.warning("%s: %d depth values beyond 65.535 m clamped", path, int(np.count_nonzero(mm > MAX_DEPTH_MM)))
        mm = np.minimum(mm, MAX_DEPTH_MM)
    h, w = d.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n{MAX_DEPTH_MM}\n".encode() + mm.astype(">u2").tobytes())


def read_depth(path) -> np.ndarray:
    body, w, h, maxval = _read_netpbm(path, b"P5")
    if maxval < 256:
        raise FormatError(f"{path}: depth PGM must be 16-bit")
    if len(body) < w * h * 2:
        raise FormatError(f"{path}: raster truncated")
    mm = np.frombuffer(body[: w * h * 2], dtype=">u2").reshape(h, w)
    return mm.astype(np.float64) / 1000.0


# --------------------------------------------------------------------- ply

PALETTE = np.array(
    [
        [0, 0, 0],
        [214, 214, 214],  # ceiling
        [152, 223, 138],  # floor
        [174, 199, 232],  # wall
        [31, 119, 180],  # window
        [255, 187, 120],  # chair
        [188, 189, 34],  # bed
        [140, 86, 75],  # sofa
        [255, 152, 150],  # table
        [214, 39, 40],  # tvs
        [197, 176, 213],  # furniture
        [148, 103, 189],  # objects
    ],
    dtype=np.uint8,
)

_CUBE_CORNERS = np.array([[i >> 2 & 1, i >> 1 & 1, i & 1] for i in range(8)], dtype=np.float64)
_CUBE_TRIS = np.array(
    [
        [0, 1, 3], [0, 3, 2],  # x = 0
        [4, 6, 7], [4, 7, 5],  # x = 1
        [0, 4, 5], [0, 5, 1],  # y = 0
        [2, 3, 7], [2, 7, 6],  # y = 1
        [0, 2, 6], [0, 6, 4],  # z = 0
        [1, 5, 7], [1, 7, 3],  # z = 1
    ],
    dtype=np.int64,
)  # fmt: skip


def export_ply(path, values, spec: VoxelGridSpec, threshold=None):
    """Write one coloured cube per exported voxel as ASCII PLY.

    Integer volumes are treated as labels: voxels with class 1..11 are
    exported in the class palette. Float volumes export voxels with
    ``|v| > threshold`` (default 0.8), red for positive, blue for negative.
    Returns the number of exported voxels.
    """
    v = np.asarray(values)
    if np.issubdtype(v.dtype, np.floating):
        thr = 0.8 if threshold is None else threshold
        idx = np.argwhere(np.abs(v) > thr)
        colors = np.where((v[tuple(idx.T)] > 0)[:, None], [[220, 40, 40]], [[40, 60, 220]]).astype(np.uint8)
    else:
        lab = v.astype(np.int64)
        idx = np.argwhere((lab > 0) & (lab < NUM_CLASSES) & (lab != IGNORE))
        colors = PALETTE[lab[tuple(idx.T)]]

    n = len(idx)
    corners = (np.asarray(spec.origin) + (idx[:, None, :] + _CUBE_CORNERS[None]) * spec.voxel_size).reshape(-1, 3)
    vcolors = np.repeat(colors, 8, axis=0)
    faces = (_CUBE_TRIS[None] + 8 * np.arange(n)[:, None, None]).reshape(-1, 3)

    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {8 * n}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        f"element face {12 * n}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    lines += [f"{p[0]:.6g} {p[1]:.6g} {p[2]:.6g} {c[0]} {c[1]} {c[2]}" for p, c in zip(corners, vcolors)]
    lines += [f"3 {f[0]} {f[1]} {f[2]}" for f in faces]
    Path(path).write_text("\n".join(lines) + "\n")
    return n


def read_ply_counts(path):
    """(vertex count, face count) from a PLY header."""
    nv = nf = None
    with open(path, "r") as fh:
        for line in fh:
            parts = line.split()
            if parts[:2] == ["element", "vertex"]:
                nv = int(parts[2])
            elif parts[:2] == ["element", "face"]:
                nf = int(parts[2])
            elif parts[:1] == ["end_header"]:
                break
    if nv is None or nf is None:
        raise FormatError(f"{path}: missing element counts")
    return nv, nf


# ---------------------------------------------------------------- manifest


@dataclass(frozen=True)
class ManifestEntry:
    rgb: str
    depth: str
    gt: str
    room: str
    meta: str

    def resolve(self, root):
        root = Path(root)
        return ManifestEntry(*(str(root / p) for p in (self.rgb, self.depth, self.gt, self.room, self.meta)))


def write_manifest(path, entries):
    with open(path, "w") as fh:
        for e in entries:
            fh.write(f"{e.rgb} {e.depth} {e.gt} {e.room} {e.meta}\n")


def read_manifest(path):
    entries = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) != 5:
                raise FormatError(f"{path}:{n}: expected 5 paths, found {len(parts)}")
            entries.append(ManifestEntry(*parts))
    return entries


def atomic_write_text(path, text):
    tmp = f"{path}.tmp{os.getpid()}"
    Path(tmp).write_text(text)
    os.replace(tmp, path)
