import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxelforge.errors import ShapeMismatchError
from voxelforge.geometry import (
    BinaryVolume,
    CameraIntrinsics,
    PointCloud,
    RigidTransform,
    VoxelGridSpec,
    camera_pose,
    depth_to_point_cloud,
    points_to_indices,
    unproject_pixel,
    voxelize,
    world_to_voxel,
)

K = CameraIntrinsics(fx=500.0, fy=480.0, cx=160.0, cy=120.0, width=320, height=240)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


class TestIntrinsics:
    def test_rejects_bad_focal(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(0.0, 1.0, 1.0, 1.0, 4, 4)

    @pytest.mark.parametrize("cx,cy", [(-0.1, 1.0), (4.0, 1.0), (1.0, 4.0)])
    def test_rejects_principal_point_outside(self, cx, cy):
        with pytest.raises(ValueError):
            CameraIntrinsics(1.0, 1.0, cx, cy, 4, 4)


class TestUnproject:
    def test_principal_ray(self):
        np.testing.assert_array_equal(unproject_pixel(K.cx, K.cy, 2.0, K), [0.0, 0.0, 2.0])

    def test_unit_offset(self):
        k = CameraIntrinsics(100.0, 100.0, 50.0, 40.0, 200, 100)
        np.testing.assert_array_equal(unproject_pixel(k.cx + k.fx, k.cy, 1.0, k), [1.0, 0.0, 1.0])

    @pytest.mark.parametrize("d", [0.0, -1.0])
    def test_rejects_nonpositive_depth(self, d):
        with pytest.raises(ValueError):
            unproject_pixel(10, 10, d, K)

    @pytest.mark.parametrize("u,v", [(-1, 0), (320, 0), (0, 240)])
    def test_rejects_out_of_bounds(self, u, v):
        with pytest.raises(ValueError):
            unproject_pixel(u, v, 1.0, K)

    @given(
        st.floats(0, 319.99),
        st.floats(0, 239.99),
        st.floats(0.05, 20.0),
    )
    def test_reprojection_round_trip(self, u, v, d):
        p = unproject_pixel(u, v, d, K)
        pu, pv = K.project(p)
        assert abs(pu - u) < 1e-9 and abs(pv - v) < 1e-9


class TestTransform:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            RigidTransform(np.diag([1.0, 1.0, 1.1]), np.zeros(3))

    def test_rejects_reflection(self):
        with pytest.raises(ValueError):
            RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_preserves_distances(self, rng):
        t = RigidTransform(random_rotation(rng), rng.standard_normal(3))
        p = rng.standard_normal((50, 3)) * 3
        q = t.apply(p)
        d0 = np.linalg.norm(p[:, None] - p[None], axis=-1)
        d1 = np.linalg.norm(q[:, None] - q[None], axis=-1)
        assert np.max(np.abs(d0 - d1)) < 1e-9

    def test_inverse_and_compose(self, rng):
        t = RigidTransform(random_rotation(rng), rng.standard_normal(3))
        p = rng.standard_normal((10, 3))
        np.testing.assert_allclose(t.inverse().apply(t.apply(p)), p, atol=1e-12)
        i = t.compose(t.inverse())
        np.testing.assert_allclose(i.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(i.translation, 0, atol=1e-12)

    def test_dict_round_trip(self, rng):
        t = RigidTransform(random_rotation(rng), rng.standard_normal(3))
        u = RigidTransform.from_dict(t.to_dict())
        np.testing.assert_array_equal(u.rotation, t.rotation)
        np.testing.assert_array_equal(u.translation, t.translation)

    def test_camera_pose_looks_along_z(self):
        t = camera_pose((1.0, 2.0, 3.0))
        forward = t.apply([0.0, 0.0, 1.0]) - t.translation
        up = t.apply([0.0, -1.0, 0.0]) - t.translation
        np.testing.assert_allclose(forward, [0, 0, 1], atol=1e-15)
        np.testing.assert_allclose(up, [0, 1, 0], atol=1e-15)

    def test_positive_pitch_looks_down(self):
        forward = camera_pose((0, 0, 0), pitch=0.2).rotation[:, 2]
        assert forward[1] < 0 and forward[2] > 0


class TestGridSpec:
    def test_canonical_dims(self):
        spec = VoxelGridSpec.canonical()
        assert spec.dims == (240, 144, 240)
        assert spec.voxel_size == 0.02
        np.testing.assert_allclose(spec.extent, (4.8, 2.88, 4.8), rtol=0, atol=1e-12)
        assert spec.truncation_voxels(0.24) == 12

    def test_desk_dims(self):
        assert VoxelGridSpec.desk().dims == (60, 36, 60)

    def test_coarsen(self):
        c = VoxelGridSpec.desk((1, 2, 3)).coarsen(4)
        assert c.dims == (15, 9, 15) and c.voxel_size == pytest.approx(0.32) and c.origin == (1, 2, 3)

    def test_coarsen_rejects_indivisible(self):
        with pytest.raises(ShapeMismatchError):
            VoxelGridSpec((0, 0, 0), 1.0, (5, 4, 4)).coarsen(4)

    @pytest.mark.parametrize("kw", [dict(voxel_size=0.0), dict(dims=(0, 1, 1))])
    def test_rejects_invalid(self, kw):
        with pytest.raises(ValueError):
            VoxelGridSpec(**kw)

    def test_centers(self):
        spec = VoxelGridSpec((1.0, -1.0, 0.5), 0.5, (2, 3, 4))
        c = spec.centers()
        assert c.shape == (2, 3, 4, 3)
        np.testing.assert_allclose(c[1, 2, 3], spec.voxel_center((1, 2, 3)))
        np.testing.assert_allclose(c[0, 0, 0], (1.25, -0.75, 0.75))


class TestWorldToVoxel:
    spec = VoxelGridSpec((0.5, -1.0, 2.0), 0.1, (10, 20, 30))

    def test_origin(self):
        assert world_to_voxel(self.spec.origin, self.spec) == (0, 0, 0)

    def test_last_cell_center(self):
        p = np.asarray(self.spec.origin) + self.spec.voxel_size * (np.asarray(self.spec.dims) - 0.5)
        assert world_to_voxel(p, self.spec) == (9, 19, 29)

    def test_beyond_max_corner(self):
        p = np.asarray(self.spec.origin) + self.spec.voxel_size * (np.asarray(self.spec.dims) + 0.5)
        assert world_to_voxel(p, self.spec) is None

    def test_below_origin(self):
        assert world_to_voxel(np.asarray(self.spec.origin) - 1e-9, self.spec) is None

    def test_boundary_goes_to_higher_cell(self):
        spec = VoxelGridSpec((0, 0, 0), 0.5, (4, 4, 4))
        assert world_to_voxel((0.5, 1.0, 1.5), spec) == (1, 2, 3)

    @settings(max_examples=200)
    @given(st.tuples(*[st.floats(0, 0.9999) for _ in range(3)]))
    def test_center_within_half_diagonal(self, frac):
        p = np.asarray(self.spec.origin) + np.asarray(frac) * np.asarray(self.spec.extent)
        idx = world_to_voxel(p, self.spec)
        assert idx is not None
        assert np.linalg.norm(self.spec.voxel_center(idx) - p) <= np.sqrt(3) / 2 * self.spec.voxel_size + 1e-12

    def test_vectorised_agrees(self, rng):
        p = rng.uniform(-1, 5, size=(500, 3))
        idx, inside = points_to_indices(p, self.spec)
        scalar = [world_to_voxel(q, self.spec) for q in p]
        assert [s is not None for s in scalar] == inside.tolist()
        assert [tuple(i) for i in idx] == [s for s in scalar if s is not None]


class TestPointCloud:
    def test_all_zero_depth(self):
        pc = depth_to_point_cloud(np.zeros((240, 320)), K, RigidTransform.identity())
        assert len(pc) == 0 and pc.skipped == 240 * 320

    def test_single_pixel(self):
        d = np.zeros((240, 320))
        d[17, 33] = 1.7
        pc = depth_to_point_cloud(d, K, RigidTransform.identity())
        assert len(pc) == 1
        np.testing.assert_array_equal(pc.points[0], unproject_pixel(33, 17, 1.7, K))

    def test_transform_applied(self, rng):
        d = np.zeros((240, 320))
        d[5, 6] = 2.0
        t = RigidTransform(random_rotation(rng), rng.standard_normal(3))
        pc = depth_to_point_cloud(d, K, t)
        np.testing.assert_allclose(pc.points[0], t.apply(unproject_pixel(6, 5, 2.0, K)))

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            depth_to_point_cloud(np.ones((10, 10)), K, RigidTransform.identity())

    @pytest.mark.parametrize("bad", [np.nan, -1.0, np.inf])
    def test_rejects_bad_depth(self, bad):
        d = np.ones((240, 320))
        d[0, 0] = bad
        with pytest.raises(ValueError):
            depth_to_point_cloud(d, K, RigidTransform.identity())

    def test_rejects_nonfinite_points(self):
        with pytest.raises(ValueError):
            PointCloud(np.array([[0.0, np.nan, 1.0]]))


class TestVoxelize:
    spec = VoxelGridSpec((0, 0, 0), 0.1, (8, 8, 8))

    def test_empty(self):
        v = voxelize(PointCloud(), self.spec)
        assert v.count == 0 and v.dropped == 0

    def test_same_cell(self):
        v = voxelize(PointCloud([[0.11, 0.12, 0.13], [0.19, 0.15, 0.11]]), self.spec)
        assert v.count == 1 and v.values[1, 1, 1]

    def test_drops_outside(self):
        v = voxelize(PointCloud([[0.05, 0.05, 0.05], [-0.1, 0, 0], [0.85, 0, 0]]), self.spec)
        assert v.count == 1 and v.dropped == 2

    def test_wall_plane_matches_binning(self, rng):
        # points scattered on the plane z = 0.43
        p = np.column_stack([rng.uniform(-0.1, 0.9, 2000), rng.uniform(-0.1, 0.9, 2000), np.full(2000, 0.43)])
        v = voxelize(PointCloud(p), self.spec)
        ref = np.zeros(self.spec.dims, dtype=bool)
        dropped = 0
        for q in p:
            i = [int(np.floor(c / 0.1)) for c in q]
            if all(0 <= a < 8 for a in i):
                ref[tuple(i)] = True
            else:
                dropped += 1
        np.testing.assert_array_equal(v.values, ref)
        assert v.dropped == dropped and set(np.nonzero(v.values)[2]) == {4}

    def test_order_independent(self, rng):
        p = rng.uniform(0, 0.8, (300, 3))
        a = voxelize(PointCloud(p), self.spec)
        b = voxelize(PointCloud(p[rng.permutation(300)]), self.spec)
        np.testing.assert_array_equal(a.values, b.values)

    def test_binary_volume_shape_check(self):
        with pytest.raises(ShapeMismatchError):
            BinaryVolume(np.zeros((2, 2, 2)), self.spec)
