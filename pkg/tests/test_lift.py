"""Projection, bilinear sampling, pooling, and voxel feature building."""

import numpy as np
import pytest

from openocc.errors import ValidationError
from openocc.lift import (
    FeatureMap,
    bilinear_sample,
    build_sparse_voxel_features,
    pool_features,
    project_point,
)
from openocc.scene import (
    CameraModel,
    PointCloud,
    RigidTransform,
    VoxelGridSpec,
    voxel_of,
)
from openocc.synthetic import generate_synthetic_scene


def cam_at_origin(fx=100.0, fy=100.0, cx=50.0, cy=50.0, w=101, h=101):
    return CameraModel(fx, fy, cx, cy, RigidTransform.identity(), w, h)


class TestProject:
    def test_optical_axis_hits_principal_point(self):
        cam = cam_at_origin()
        u, v, depth = project_point([0.0, 0.0, 5.0], cam)
        assert (u, v) == (50.0, 50.0)
        assert depth == 5.0

    def test_behind_camera_is_none(self):
        assert project_point([0.0, 0.0, -1.0], cam_at_origin()) is None
        assert project_point([0.0, 0.0, 0.0], cam_at_origin()) is None

    def test_pinhole_formula(self):
        u, v, _ = project_point([1.0, 0.0, 10.0], cam_at_origin())
        assert np.isclose(u, 60.0) and np.isclose(v, 50.0)

    def test_outside_image_is_none(self):
        # u would be 50 + 100*2 = 250 > width-1
        assert project_point([2.0, 0.0, 1.0], cam_at_origin()) is None

    def test_extrinsics_applied(self):
        ext = RigidTransform.from_translation([0.0, 0.0, 4.0])
        cam = CameraModel(100, 100, 50, 50, ext, 101, 101)
        u, v, depth = project_point([0.0, 0.0, 1.0], cam)
        assert depth == 5.0


class TestBilinear:
    def test_integer_coordinates_exact(self):
        rng = np.random.default_rng(0)
        fm = FeatureMap(rng.uniform(size=(4, 5, 3)))
        assert np.array_equal(bilinear_sample(fm, 2.0, 3.0), fm.data[3, 2])

    def test_midpoint_average(self):
        data = np.zeros((1, 2, 2))
        data[0, 0] = [1.0, 3.0]
        data[0, 1] = [2.0, 5.0]
        fm = FeatureMap(data)
        assert np.allclose(bilinear_sample(fm, 0.5, 0.0), [1.5, 4.0])

    def test_linear_ramp(self):
        u_grid = np.tile(np.arange(6.0)[None, :, None], (5, 1, 2))
        fm = FeatureMap(u_grid)
        assert np.allclose(bilinear_sample(fm, 3.25, 2.7), 3.25)

    def test_out_of_bounds_rejected(self):
        fm = FeatureMap(np.zeros((3, 3, 1)))
        with pytest.raises(ValidationError):
            bilinear_sample(fm, 2.1, 0.0)
        with pytest.raises(ValidationError):
            bilinear_sample(fm, 0.0, -0.1)

    def test_feature_map_validation(self):
        with pytest.raises(ValidationError):
            FeatureMap(np.zeros((3, 3)))
        with pytest.raises(ValidationError):
            FeatureMap(np.full((2, 2, 1), np.nan))


class TestPooling:
    def test_single_vector_identity(self):
        v = np.array([1.0, 2.0])
        assert np.array_equal(pool_features([v], "mean"), v)
        assert np.array_equal(pool_features([v], "max"), v)

    def test_mean_and_max(self):
        a, b = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        assert np.allclose(pool_features([a, b], "mean"), [0.5, 0.5])
        assert np.allclose(pool_features([a, b], "max"), [1.0, 1.0])

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            pool_features([], "mean")

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValidationError):
            pool_features([np.zeros(2)], "median")

    def test_mean_permutation_invariant_and_idempotent(self):
        rng = np.random.default_rng(1)
        vecs = [rng.uniform(size=4) for _ in range(5)]
        fwd = pool_features(vecs, "mean")
        rev = pool_features(vecs[::-1], "mean")
        assert np.allclose(fwd, rev, atol=1e-12)
        same = pool_features([vecs[0]] * 7, "mean")
        assert np.allclose(same, vecs[0], atol=1e-12)


class TestBuildSparse:
    def test_constant_map_single_point(self):
        cam = cam_at_origin()
        fm = FeatureMap(np.full((101, 101, 3), 7.0))
        spec = VoxelGridSpec(np.array([-5.0, -5.0, 0.0]), 1.0, (10, 10, 10))
        cloud = PointCloud(np.array([[0.2, 0.3, 4.0]]))
        out = build_sparse_voxel_features(cloud, [(cam, fm)], spec)
        key = voxel_of(spec, [0.2, 0.3, 4.0])
        assert len(out) == 1
        assert np.allclose(out.entries[key], 7.0)
        assert out.counts[key] == 1

    def test_two_points_one_voxel_mean(self):
        cam = cam_at_origin()
        ramp = np.tile(np.arange(101.0)[None, :, None], (101, 1, 1))
        fm = FeatureMap(ramp)
        spec = VoxelGridSpec(np.array([-5.0, -5.0, 0.0]), 10.0, (1, 1, 1))
        pts = np.array([[0.0, 0.0, 5.0], [0.1, 0.0, 5.0]])
        out = build_sparse_voxel_features(PointCloud(pts), [(cam, fm)], spec)
        a = bilinear_sample(fm, *project_point(pts[0], cam)[:2])
        b = bilinear_sample(fm, *project_point(pts[1], cam)[:2])
        assert np.allclose(out.entries[(0, 0, 0)], (a + b) / 2.0)
        assert out.counts[(0, 0, 0)] == 2

    def test_unseen_point_contributes_nothing(self):
        cam = cam_at_origin()
        fm = FeatureMap(np.ones((101, 101, 2)))
        spec = VoxelGridSpec(np.array([-5.0, -5.0, -10.0]), 1.0, (10, 10, 20))
        cloud = PointCloud(np.array([[0.0, 0.0, -5.0]]))  # behind the camera
        out = build_sparse_voxel_features(cloud, [(cam, fm)], spec)
        assert len(out) == 0

    def test_needs_a_camera(self):
        spec = VoxelGridSpec(np.zeros(3), 1.0, (2, 2, 2))
        with pytest.raises(ValidationError):
            build_sparse_voxel_features(PointCloud(np.zeros((1, 3))), [], spec)

    def test_matches_bruteforce_on_synthetic(self):
        spec = VoxelGridSpec(np.zeros(3), 0.5, (16, 16, 16))
        scene = generate_synthetic_scene(seed=11, n_frames=1, spec=spec)
        rng = np.random.default_rng(11)
        cams = []
        for cam in scene.cameras[:2]:
            fm = FeatureMap(rng.uniform(size=(cam.height, cam.width, 6)))
            cams.append((cam, fm))
        # World-frame points; cameras were rigged in world coordinates.
        world = scene.ego_poses[0].apply(scene.clouds[0].positions)[:100]
        cloud = PointCloud(world)
        for mode in ("mean", "max"):
            out = build_sparse_voxel_features(cloud, cams, spec, mode)

            want_entries: dict = {}
            for p in world:
                per_view = []
                for cam, fm in cams:
                    hit = project_point(p, cam)
                    if hit is not None:
                        per_view.append(bilinear_sample(fm, hit[0], hit[1]))
                if not per_view:
                    continue
                key = voxel_of(spec, p)
                if key is None:
                    continue
                want_entries.setdefault(key, []).append(
                    pool_features(per_view, mode))
            want = {k: pool_features(v, mode) for k, v in want_entries.items()}
            assert set(out.entries) == set(want)
            for k in want:
                assert np.allclose(out.entries[k], want[k], atol=1e-9)
                assert out.counts[k] == len(want_entries[k])

    def test_order_independent_within_tolerance(self):
        spec = VoxelGridSpec(np.zeros(3), 2.0, (4, 4, 4))
        rng = np.random.default_rng(3)
        pts = rng.uniform(0.5, 7.5, size=(60, 3))
        cam = CameraModel(50, 50, 50, 50,
                          RigidTransform.from_translation([0, 0, 20.0]),
                          101, 101)
        fm = FeatureMap(rng.uniform(size=(101, 101, 4)))
        perm = rng.permutation(60)
        a = build_sparse_voxel_features(PointCloud(pts), [(cam, fm)], spec)
        b = build_sparse_voxel_features(PointCloud(pts[perm]), [(cam, fm)], spec)
        assert set(a.entries) == set(b.entries)
        for k in a.entries:
            assert np.allclose(a.entries[k], b.entries[k], atol=1e-6)
