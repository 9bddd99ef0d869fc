import logging
import struct

import numpy as np
import pytest

from voxelforge.data.io import (
    EVOX_HEADER_SIZE,
    BadMagicError,
    ManifestEntry,
    TruncatedFileError,
    VersionError,
    export_ply,
    read_depth,
    read_manifest,
    read_ply_counts,
    read_rgb,
    read_volume,
    write_depth,
    write_manifest,
    write_rgb,
    write_volume,
)
from voxelforge.errors import FormatError
from voxelforge.geometry import VoxelGridSpec


@pytest.fixture
def small():
    return VoxelGridSpec((0.5, -1.0, 2.0), 0.1, (4, 3, 5))


class TestEvox:
    def test_round_trip_u8(self, tmp_path, small, rng):
        v = rng.integers(0, 256, small.dims).astype(np.uint8)
        write_volume(tmp_path / "a.evox", v, small)
        back, spec = read_volume(tmp_path / "a.evox")
        assert spec == small and back.dtype == np.uint8
        assert np.array_equal(back, v)

    def test_round_trip_f32(self, tmp_path, small, rng):
        v = rng.uniform(-1, 1, small.dims).astype(np.float32)
        write_volume(tmp_path / "a.evox", v, small)
        back, _ = read_volume(tmp_path / "a.evox")
        assert back.dtype == np.float32
        assert back.tobytes() == v.tobytes()

    def test_bool_stored_as_u8(self, tmp_path, small):
        v = np.zeros(small.dims, bool)
        v[1, 2, 3] = True
        write_volume(tmp_path / "m.evox", v, small)
        back, _ = read_volume(tmp_path / "m.evox")
        assert np.array_equal(back.astype(bool), v)

    def test_x_fastest(self, tmp_path, small):
        v = np.zeros(small.dims, np.uint8)
        v[1, 0, 0] = 7
        v[0, 1, 0] = 9
        write_volume(tmp_path / "a.evox", v, small)
        body = (tmp_path / "a.evox").read_bytes()[EVOX_HEADER_SIZE:]
        assert body[1] == 7 and body[small.dims[0]] == 9

    def test_canonical_size(self, tmp_path):
        spec = VoxelGridSpec.canonical()
        assert spec.dims == (240, 144, 240)
        write_volume(tmp_path / "c.evox", np.zeros(spec.dims, np.uint8), spec)
        assert (tmp_path / "c.evox").stat().st_size == 56 + 8_294_400

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x").write_bytes(b"XXXX" + bytes(100))
        with pytest.raises(BadMagicError):
            read_volume(tmp_path / "x")

    def test_bad_version(self, tmp_path, small):
        write_volume(tmp_path / "a.evox", np.zeros(small.dims, np.uint8), small)
        raw = bytearray((tmp_path / "a.evox").read_bytes())
        raw[4:8] = struct.pack("<I", 2)
        (tmp_path / "a.evox").write_bytes(bytes(raw))
        with pytest.raises(VersionError):
            read_volume(tmp_path / "a.evox")

    @pytest.mark.parametrize("keep", [10, EVOX_HEADER_SIZE + 3])
    def test_truncated(self, tmp_path, small, keep):
        write_volume(tmp_path / "a.evox", np.zeros(small.dims, np.uint8), small)
        raw = (tmp_path / "a.evox").read_bytes()
        (tmp_path / "a.evox").write_bytes(raw[:keep])
        with pytest.raises(TruncatedFileError):
            read_volume(tmp_path / "a.evox")

    def test_shape_check(self, tmp_path, small):
        with pytest.raises(ValueError):
            write_volume(tmp_path / "a.evox", np.zeros((1, 2, 3), np.uint8), small)


class TestImages:
    def test_rgb_round_trip(self, tmp_path, rng):
        img = rng.integers(0, 256, (7, 9, 3)) / 255.0
        write_rgb(tmp_path / "a.ppm", img)
        assert np.array_equal(read_rgb(tmp_path / "a.ppm"), img)

    def test_depth_unit(self, tmp_path):
        write_depth(tmp_path / "d.pgm", np.full((2, 3), 1.234))
        raw = (tmp_path / "d.pgm").read_bytes()
        assert raw.endswith(struct.pack(">H", 1234))
        assert np.all(read_depth(tmp_path / "d.pgm") == 1.234)

    def test_depth_round_trip(self, tmp_path, rng):
        d = rng.integers(0, 65536, (5, 6)) / 1000.0
        write_depth(tmp_path / "d.pgm", d)
        assert np.array_equal(read_depth(tmp_path / "d.pgm"), d)

    def test_depth_clamp(self, tmp_path, caplog):
        with caplog.at_level(logging.WARNING):
            write_depth(tmp_path / "d.pgm", np.array([[65.535, 70.0]]))
        assert "clamped" in caplog.text
        assert np.array_equal(read_depth(tmp_path / "d.pgm"), [[65.535, 65.535]])

    def test_wrong_kind(self, tmp_path, rng):
        write_rgb(tmp_path / "a.ppm", np.zeros((2, 2, 3)))
        with pytest.raises(FormatError):
            read_depth(tmp_path / "a.ppm")

    def test_header_comment(self, tmp_path):
        (tmp_path / "c.ppm").write_bytes(b"P6\n# note\n1 1\n255\n" + bytes([255, 0, 51]))
        assert np.allclose(read_rgb(tmp_path / "c.ppm"), [[[1.0, 0.0, 0.2]]])


class TestPly:
    def test_empty(self, tmp_path, small):
        n = export_ply(tmp_path / "e.ply", np.zeros(small.dims, np.uint8), small)
        assert n == 0 and read_ply_counts(tmp_path / "e.ply") == (0, 0)

    def test_single_voxel(self, tmp_path, small):
        v = np.zeros(small.dims, np.uint8)
        v[1, 1, 1] = 3
        assert export_ply(tmp_path / "s.ply", v, small) == 1
        assert read_ply_counts(tmp_path / "s.ply") == (8, 12)
        lines = (tmp_path / "s.ply").read_text().splitlines()
        body = lines[lines.index("end_header") + 1 :]
        xyz = np.array([[float(t) for t in ln.split()[:3]] for ln in body[:8]])
        np.testing.assert_allclose(xyz.min(0), [0.6, -0.9, 2.1], atol=1e-6)
        np.testing.assert_allclose(xyz.max(0), [0.7, -0.8, 2.2], atol=1e-6)

    def test_skips_ignore_and_empty(self, tmp_path, small):
        v = np.full(small.dims, 255, np.uint8)
        v[0, 0, 0] = 0
        v[2, 2, 2] = 11
        assert export_ply(tmp_path / "i.ply", v, small) == 1

    def test_tsdf_threshold(self, tmp_path, small):
        v = np.zeros(small.dims, np.float32)
        v[0, 0, 0], v[1, 0, 0], v[2, 0, 0] = 0.9, -0.95, 0.5
        assert export_ply(tmp_path / "t.ply", v, small) == 2
        assert export_ply(tmp_path / "t.ply", v, small, threshold=0.4) == 3


class TestManifest:
    def test_round_trip(self, tmp_path):
        es = [ManifestEntry(*(f"s{i}/{n}" for n in ("rgb.ppm", "depth.pgm", "gt.evox", "room.evox", "meta.json"))) for i in range(3)]
        write_manifest(tmp_path / "m.txt", es)
        assert read_manifest(tmp_path / "m.txt") == es
        assert es[0].resolve(tmp_path).rgb == str(tmp_path / "s0/rgb.ppm")

    def test_blank_and_comment(self, tmp_path):
        (tmp_path / "m.txt").write_text("# header\n\na b c d e\n")
        assert len(read_manifest(tmp_path / "m.txt")) == 1

    def test_bad_line(self, tmp_path):
        (tmp_path / "m.txt").write_text("a b c\n")
        with pytest.raises(FormatError, match=":1:"):
            read_manifest(tmp_path / "m.txt")
