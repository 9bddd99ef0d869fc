import numpy as np
import pytest

from conftest import prepared
from oracles import grid_with_counts
from voxelforge.errors import ShapeMismatchError
from voxelforge.geometry import BinaryVolume, VoxelGridSpec
from voxelforge.labels import EMPTY, IGNORE, LabelVolume, downsample_labels, downsample_mask
from voxelforge.occupancy import Occupancy, balance_ratio, balance_weights, build_occupancy_grid
from voxelforge.tsdf import Visibility, VisibilityVolume

SPEC = VoxelGridSpec((0, 0, 0), 0.1, (6, 5, 4))


def volumes(rng, spec=SPEC):
    gt = rng.integers(0, 12, spec.dims).astype(np.uint8)
    gt[rng.random(spec.dims) < 0.1] = IGNORE
    vis = rng.integers(0, 4, spec.dims).astype(np.uint8)
    room = rng.random(spec.dims) < 0.8
    return LabelVolume(gt, spec), VisibilityVolume(vis, spec), BinaryVolume(room, spec)


class TestLabels:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            LabelVolume(np.full(SPEC.dims, 12, np.uint8), SPEC)

    def test_rejects_shape(self):
        with pytest.raises(ShapeMismatchError):
            LabelVolume(np.zeros((2, 2, 2), np.uint8), SPEC)

    def test_downsample(self):
        spec = VoxelGridSpec((0, 0, 0), 0.1, (4, 4, 8))
        v = np.zeros(spec.dims, np.uint8)
        v[:, :, :4][:2] = 3  # 32 of 64 voxels class 3
        v[:, :, :4][2, :2] = 5  # 8 voxels class 5
        v[:, :, 4:][0, 0, 0] = 2  # 1 of 64: below the fill threshold
        out = downsample_labels(LabelVolume(v, spec), 4)
        assert out.spec.dims == (1, 1, 2) and out.values.ravel().tolist() == [3, EMPTY]

    def test_downsample_ignore(self):
        spec = VoxelGridSpec((0, 0, 0), 0.1, (4, 4, 4))
        v = np.full(spec.dims, IGNORE, np.uint8)
        v[0] = 2
        assert downsample_labels(LabelVolume(v, spec), 4).values.item() == IGNORE

    def test_downsample_mask(self):
        m = np.zeros((4, 4, 8), bool)
        m[:, :, :4] = True
        m[:2, :, 4:] = True
        m[2, 0, 4] = True
        assert downsample_mask(m, 4).ravel().tolist() == [True, True]
        m[:2, :, 4:] = False
        assert downsample_mask(m, 4).ravel().tolist() == [True, False]


class TestGrid:
    def test_reference_loop(self, rng):
        gt, vis, room = volumes(rng)
        grid = build_occupancy_grid(gt, vis, room)
        for idx in np.ndindex(SPEC.dims):
            g, v, r = gt.values[idx], vis.values[idx], room.values[idx]
            if r and g != IGNORE and g != EMPTY and v != Visibility.OUTSIDE_VIEW:
                want = Occupancy.OCCUPIED_IN
            elif r and g == EMPTY and v == Visibility.OCCLUDED:
                want = Occupancy.OCCLUDED_FREE_IN
            else:
                want = Occupancy.OTHER
            assert grid.values[idx] == want

    def test_scene_reference_counts(self):
        p = prepared(3)
        g, v, r = p.gt.values, p.grid.visibility.values, p.grid.room.values
        n_occ = n_occl = 0
        for idx in np.ndindex(g.shape):
            if r[idx] and g[idx] not in (EMPTY, IGNORE) and v[idx] != Visibility.OUTSIDE_VIEW:
                n_occ += 1
            elif r[idx] and g[idx] == EMPTY and v[idx] == Visibility.OCCLUDED:
                n_occl += 1
        assert p.grid.occupied.sum() == n_occ > 0
        assert p.grid.occluded.sum() == n_occl > 0

    def test_empty_visible_room(self):
        spec = SPEC
        gt = np.zeros(spec.dims, np.uint8)
        vis = np.full(spec.dims, Visibility.VISIBLE_FREE, np.uint8)
        grid = build_occupancy_grid(
            LabelVolume(gt, spec), VisibilityVolume(vis, spec), BinaryVolume(np.ones(spec.dims, bool), spec)
        )
        assert not grid.occluded.any() and not grid.occupied.any()

    def test_occluded_box_is_occupied(self):
        spec = SPEC
        gt = np.zeros(spec.dims, np.uint8)
        gt[2:4, 1:3, 1:3] = 5
        vis = np.full(spec.dims, Visibility.OCCLUDED, np.uint8)
        grid = build_occupancy_grid(
            LabelVolume(gt, spec), VisibilityVolume(vis, spec), BinaryVolume(np.ones(spec.dims, bool), spec)
        )
        assert np.all(grid.occupied == (gt == 5))
        assert np.all(grid.occluded == (gt == 0))

    def test_spec_mismatch(self, rng):
        gt, vis, room = volumes(rng)
        other = VoxelGridSpec((1, 0, 0), 0.1, SPEC.dims)
        with pytest.raises(ShapeMismatchError):
            build_occupancy_grid(gt, vis, BinaryVolume(room.values, other))


class TestBalance:
    def test_ratio(self):
        assert balance_ratio(10, 40) == 0.5
        assert balance_ratio(30, 40) == 1.0
        assert balance_ratio(5, 0) == 1.0

    def test_weights_binary_and_masked(self, rng):
        gt, vis, room = volumes(rng)
        grid = build_occupancy_grid(gt, vis, room)
        w = balance_weights(grid, 7)
        assert set(np.unique(w)) <= {0.0, 1.0}
        assert np.all(w[grid.occupied] == 1)
        assert np.all(w[grid.values == Occupancy.OTHER] == 0)

    def test_clamped_keeps_all(self):
        grid = grid_with_counts(30, 40)
        assert np.all(balance_weights(grid, 3)[grid.occluded] == 1)

    def test_deterministic(self):
        grid = grid_with_counts(10, 40)
        np.testing.assert_array_equal(balance_weights(grid, 11), balance_weights(grid, 11))
        assert any(np.any(balance_weights(grid, 11) != balance_weights(grid, s)) for s in range(12, 20))

    def test_no_occluded(self):
        grid = grid_with_counts(10, 0)
        np.testing.assert_array_equal(balance_weights(grid, 0), grid.occupied.astype(np.float32))

    def test_binomial(self):
        grid = grid_with_counts(10, 40)
        kept = np.array([balance_weights(grid, s)[grid.occluded].sum() for s in range(1000)])
        n, r = 40, 0.5
        assert abs(kept.mean() - n * r) <= 3 * np.sqrt(n * r * (1 - r) / len(kept))
        # sample variance close to the binomial variance npq = 10
        assert 8.0 < kept.var(ddof=1) < 12.0

    def test_accepts_raw_array(self):
        grid = grid_with_counts(10, 40)
        batch = np.stack([grid.values, grid.values])
        w = balance_weights(batch, 5)
        assert w.shape == batch.shape and np.all(w[batch == Occupancy.OCCUPIED_IN] == 1)
