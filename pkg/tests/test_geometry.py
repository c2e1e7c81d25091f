import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cadalign.errors import InputError
from cadalign.geometry import (
    CameraExtrinsics,
    CameraIntrinsics,
    PointCloud,
    Pose9DoF,
    apply_pose,
    backproject,
    invert_pose,
    is_rotation,
    random_rotation,
    rot_z,
    to_world,
)

INTR = CameraIntrinsics(fx=500.0, fy=500.0, cx=240.0, cy=180.0, width=480, height=360)


class TestBackproject:
    def test_principal_point_on_axis(self):
        pc = backproject([[INTR.cx, INTR.cy]], [2.0], INTR)
        np.testing.assert_array_equal(pc.points, [[0.0, 0.0, 2.0]])

    def test_unit_offset(self):
        intr = CameraIntrinsics(100.0, 100.0, 40.0, 30.0, 480, 360)
        np.testing.assert_allclose(backproject([[140.0, 30.0]], [1.0], intr).points, [[1.0, 0.0, 1.0]])

    def test_hand_evaluated(self):
        # (300-240)/500*2.5 = 0.3, (100-180)/500*2.5 = -0.4
        pc = backproject([[300.0, 100.0]], [2.5], INTR)
        np.testing.assert_allclose(pc.points, [[0.3, -0.4, 2.5]], atol=1e-15)

    def test_depth_is_preserved_exactly(self, rng):
        pix = np.column_stack([rng.uniform(0, 480, 100), rng.uniform(0, 360, 100)])
        d = rng.uniform(0.1, 10, 100)
        assert np.array_equal(backproject(pix, d, INTR).points[:, 2], d)

    @pytest.mark.parametrize("depth", [0.0, -1.0, np.nan])
    def test_rejects_bad_depth(self, depth):
        with pytest.raises(InputError):
            backproject([[10.0, 10.0]], [depth], INTR)

    @pytest.mark.parametrize("pix", [[-1.0, 10.0], [480.0, 10.0], [10.0, 360.0]])
    def test_rejects_out_of_bounds(self, pix):
        with pytest.raises(InputError):
            backproject([pix], [1.0], INTR)

    def test_intrinsics_invariants(self):
        with pytest.raises(InputError):
            CameraIntrinsics(0.0, 1.0, 1.0, 1.0, 10, 10)
        with pytest.raises(InputError):
            CameraIntrinsics(1.0, 1.0, 10.0, 1.0, 10, 10)


class TestPose:
    def test_identity(self, rng):
        q = rng.uniform(-0.5, 0.5, (10, 3))
        np.testing.assert_array_equal(apply_pose(Pose9DoF.identity(), q).points, q)

    def test_translation(self):
        pose = Pose9DoF([1, 2, 3], np.ones(3), np.eye(3))
        np.testing.assert_array_equal(apply_pose(pose, [[0, 0, 0]]).points, [[1, 2, 3]])

    def test_scale_then_rotate(self):
        pose = Pose9DoF(np.zeros(3), [2, 1, 1], rot_z(np.pi / 2))
        np.testing.assert_allclose(apply_pose(pose, [[0.5, 0, 0]]).points, [[0, 1, 0]], atol=1e-15)

    def test_rejects_invalid(self):
        with pytest.raises(InputError):
            Pose9DoF(np.zeros(3), [1, 0, 1], np.eye(3))
        with pytest.raises(InputError):
            Pose9DoF(np.zeros(3), np.ones(3), np.diag([1, 1, -1]))
        with pytest.raises(InputError):
            Pose9DoF(np.zeros(3), np.ones(3), 2 * np.eye(3))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31))
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        pose = Pose9DoF(rng.normal(size=3) * 3, rng.uniform(0.2, 3, 3), random_rotation(rng))
        q = rng.uniform(-0.5, 0.5, (50, 3))
        np.testing.assert_allclose(invert_pose(pose, apply_pose(pose, q)), q, atol=1e-9)

    def test_serialization(self, rng):
        pose = Pose9DoF(rng.normal(size=3), rng.uniform(0.5, 2, 3), random_rotation(rng))
        back = Pose9DoF.from_dict(pose.to_dict())
        assert np.array_equal(back.R, pose.R) and np.array_equal(back.t, pose.t)


class TestPointCloud:
    def test_noc_bounds(self):
        PointCloud([[0.5, -0.5, 0.0]], frame="noc")
        with pytest.raises(InputError):
            PointCloud([[0.6, 0.0, 0.0]], frame="noc")

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(InputError):
            PointCloud(np.zeros((0, 3)))
        with pytest.raises(InputError):
            PointCloud([[np.inf, 0, 0]])


class TestToWorld:
    def test_identity_extrinsics(self, rng):
        pose = Pose9DoF(rng.normal(size=3), rng.uniform(0.5, 2, 3), random_rotation(rng))
        w = to_world(pose, CameraExtrinsics())
        np.testing.assert_array_equal(w.t, pose.t)
        np.testing.assert_array_equal(w.R, pose.R)

    def test_translation_composition(self):
        pose = Pose9DoF([0, 0, 1], np.ones(3), np.eye(3))
        w = to_world(pose, CameraExtrinsics(np.eye(3), [1, 0, 0]))
        np.testing.assert_array_equal(w.t, [1, 0, 1])

    def test_planar_rotation_composition(self):
        pose = Pose9DoF(np.zeros(3), np.ones(3), rot_z(np.radians(30)))
        w = to_world(pose, CameraExtrinsics(rot_z(np.radians(60)), np.zeros(3)))
        np.testing.assert_allclose(w.R, rot_z(np.pi / 2), atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31))
    def test_preserves_scale_and_so3(self, seed):
        rng = np.random.default_rng(seed)
        pose = Pose9DoF(rng.normal(size=3), rng.uniform(0.5, 2, 3), random_rotation(rng))
        w = to_world(pose, CameraExtrinsics(random_rotation(rng), rng.normal(size=3)))
        assert np.array_equal(w.s, pose.s)
        assert is_rotation(w.R, 1e-6)
