import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from aerodepth.errors import BehindCameraError, InvalidDepthError, InvalidPoseError, ShapeError
from aerodepth.geometry.camera import project, relative_transform, transform_points, unproject
from aerodepth.geometry.reconstruction import point_cloud_from_maps, read_point_cloud, write_point_cloud
from aerodepth.geometry.rotations import matrix_from_quaternion, quaternion_from_euler, quaternion_from_matrix
from aerodepth.geometry.warping import (
    depth_from_parallax, parallax_from_depth, reprojection_coordinates, warp_map,
)
from aerodepth.models import CameraIntrinsics, DepthMap, MotionTransform, ParallaxMap, Pose

from conftest import random_pose, small_motion


# ============================================================================
# POSES AND MOTIONS
# ============================================================================

def test_relative_transform_of_identical_poses_is_identity():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        pose = random_pose(rng)
        motion = relative_transform(pose, pose)
        assert np.allclose(motion.translation, 0.0, atol=1e-9)
        assert np.allclose(motion.rotation, np.eye(3), atol=1e-9)


def test_relative_transform_with_identity_rotation():
    a = Pose([0, 0, 0], [1, 0, 0, 0])
    b = Pose([1, 2, 3], [1, 0, 0, 0])
    assert np.allclose(relative_transform(a, b).translation, [1, 2, 3])


def test_relative_transform_under_yaw():
    yaw = quaternion_from_euler('z', 90.0)
    a = Pose([5, 5, 5], yaw)
    b = Pose([6, 5, 5], yaw)
    motion = relative_transform(a, b)

    # quaternion (cos 45, 0, 0, sin 45) written out as a matrix
    half = math.sqrt(0.5)
    w, z = half, half
    oracle = np.array([
        [1 - 2 * z * z, -2 * w * z, 0.0],
        [2 * w * z, 1 - 2 * z * z, 0.0],
        [0.0, 0.0, 1.0],
    ])
    assert np.allclose(matrix_from_quaternion(yaw), oracle, atol=1e-12)
    assert np.allclose(motion.translation, oracle.T @ [1, 0, 0], atol=1e-9)
    assert np.allclose(motion.translation, [0, -1, 0], atol=1e-9)
    assert np.allclose(motion.rotation, np.eye(3), atol=1e-9)


def test_relative_transform_composes():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        a, b, c = (random_pose(rng) for _ in range(3))
        composed = relative_transform(a, b).compose(relative_transform(b, c))
        assert composed.allclose(relative_transform(a, c), atol=1e-6)


def test_relative_transform_maps_points_between_frames():
    rng = np.random.default_rng(3)
    a, b = random_pose(rng), random_pose(rng)
    point_in_b = rng.normal(size=3)
    world = b.rotation_matrix @ point_in_b + b.position
    expected_in_a = a.rotation_matrix.T @ (world - a.position)
    assert np.allclose(transform_points(point_in_b, relative_transform(a, b)), expected_in_a, atol=1e-9)


def test_quaternion_round_trip_up_to_sign():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        q = random_pose(rng).orientation
        recovered = quaternion_from_matrix(matrix_from_quaternion(q))
        assert np.allclose(recovered, q, atol=1e-9) or np.allclose(recovered, -q, atol=1e-9)


def test_pose_rejects_non_unit_quaternion():
    with pytest.raises(InvalidPoseError):
        Pose([0, 0, 0], [1.0, 0.1, 0.0, 0.0])


def test_motion_rejects_reflection():
    with pytest.raises(InvalidPoseError):
        MotionTransform(np.diag([-1.0, 1.0, 1.0]), np.zeros(3))


# ============================================================================
# PINHOLE
# ============================================================================

def test_project_closed_form(intrinsics):
    assert np.allclose(project([1.0, 2.0, 4.0], intrinsics), [75.0, 100.0])
    assert np.allclose(project([0.0, 0.0, 7.0], intrinsics), [intrinsics.cx, intrinsics.cy])


def test_unproject_inverts_project(intrinsics):
    assert np.allclose(unproject([75.0, 100.0], 4.0, intrinsics), [1.0, 2.0, 4.0])
    assert np.allclose(unproject([intrinsics.cx, intrinsics.cy], 3.0, intrinsics), [0.0, 0.0, 3.0])


def test_project_rejects_points_behind_camera(intrinsics):
    with pytest.raises(BehindCameraError):
        project([0.0, 0.0, 0.0], intrinsics)
    with pytest.raises(BehindCameraError):
        project([1.0, 1.0, -2.0], intrinsics)


def test_unproject_rejects_non_positive_depth(intrinsics):
    with pytest.raises(InvalidDepthError):
        unproject([1.0, 1.0], 0.0, intrinsics)


# ============================================================================
# WARPING
# ============================================================================

def test_identity_warp_is_exact_for_class_maps(small_intrinsics):
    rng = np.random.default_rng(5)
    seg = rng.integers(0, 9, size=(8, 8)).astype(np.uint8)
    depth = DepthMap(rng.uniform(1.0, 50.0, size=(8, 8)), 200.0)
    warped, mask = warp_map(seg, depth, MotionTransform.identity(), small_intrinsics, 'nearest')
    assert mask.all()
    assert warped.dtype == np.uint8
    assert np.array_equal(warped, seg)


def test_warp_rejects_mismatched_resolution(small_intrinsics):
    depth = DepthMap(np.full((8, 8), 5.0), 200.0)
    with pytest.raises(ShapeError):
        warp_map(np.zeros((4, 4)), depth, MotionTransform.identity(), small_intrinsics)


def test_lateral_translation_shifts_pixels_uniformly():
    intr = CameraIntrinsics(fx=20.0, fy=20.0, cx=15.5, cy=15.5, width=32, height=32)
    z, tx = 10.0, 1.0
    depth = DepthMap(np.full((32, 32), z), 200.0)
    i, j, z_other = reprojection_coordinates(depth, MotionTransform(np.eye(3), [tx, 0.0, 0.0]), intr)
    cols, rows = np.meshgrid(np.arange(32.0), np.arange(32.0))
    assert np.allclose(i - cols, intr.fx * tx / z, atol=1e-9)
    assert np.allclose(j, rows, atol=1e-9)
    assert np.allclose(z_other, z)


def test_lateral_translation_warp_matches_brute_force():
    intr = CameraIntrinsics(fx=20.0, fy=20.0, cx=15.5, cy=15.5, width=32, height=32)
    z, tx = 10.0, 1.0
    source = np.random.default_rng(6).uniform(size=(32, 32))
    depth = DepthMap(np.full((32, 32), z), 200.0)
    warped, mask = warp_map(source, depth, MotionTransform(np.eye(3), [tx, 0.0, 0.0]), intr, 'bilinear')
    shift = intr.fx * tx / z
    for row in range(32):
        for col in range(32):
            landing = col + shift
            if landing > 31:
                assert not mask[row, col]
                assert warped[row, col] == 0.0
                continue
            left = int(math.floor(landing))
            frac = landing - left
            right = min(left + 1, 31)
            expected = (1 - frac) * source[row, left] + frac * source[row, right]
            assert mask[row, col]
            assert warped[row, col] == pytest.approx(expected, abs=1e-9)


def test_forward_translation_expands_radially():
    intr = CameraIntrinsics(fx=20.0, fy=20.0, cx=15.5, cy=15.5, width=32, height=32)
    depth = DepthMap(np.full((32, 32), 10.0), 200.0)
    # camera moved 1 m toward the plane: the previous frame sees it 1 m further away
    i, j, _ = reprojection_coordinates(depth, MotionTransform(np.eye(3), [0.0, 0.0, 1.0]), intr)
    cols, rows = np.meshgrid(np.arange(32.0), np.arange(32.0))
    flow = np.stack([cols - i, rows - j], axis=-1)
    radial = np.stack([cols - intr.cx, rows - intr.cy], axis=-1)
    assert np.all(np.einsum('hwc,hwc->hw', flow, radial) > 0)


# ============================================================================
# PARALLAX
# ============================================================================

def test_zero_translation_gives_zero_parallax(small_intrinsics):
    depth = DepthMap(np.random.default_rng(7).uniform(2.0, 30.0, size=(8, 8)), 200.0)
    rotation = Rotation.from_euler('y', 3.0, degrees=True).as_matrix()
    parallax, _ = parallax_from_depth(depth, MotionTransform(rotation, np.zeros(3)), small_intrinsics)
    assert np.all(parallax.values == 0.0)


@pytest.mark.parametrize('alternative, denominator', [(False, 4.0 * 4.0 + 0.1), (True, 4.0 * (4.0 + 0.1))])
def test_single_pixel_parallax_closed_form(alternative, denominator):
    intr = CameraIntrinsics(fx=2.0, fy=2.0, cx=0.0, cy=0.0, width=1, height=1)
    motion = MotionTransform(np.eye(3), [0.5, 0.2, 0.1])
    parallax, mask = parallax_from_depth(DepthMap([[4.0]], 200.0), motion, intr, alternative)
    numerator = math.hypot(2.0 * 0.5, 2.0 * 0.2)
    assert mask[0, 0]
    assert parallax.values[0, 0] == pytest.approx(numerator / denominator, rel=1e-12)


def test_lateral_parallax_inverts_to_depth():
    intr = CameraIntrinsics(fx=4.0, fy=4.0, cx=0.0, cy=0.0, width=1, height=1)
    motion = MotionTransform(np.eye(3), [2.0, 0.0, 0.0])
    depth, mask = depth_from_parallax(ParallaxMap([[0.125]]), motion, intr, 200.0)
    assert mask[0, 0]
    assert depth.values[0, 0] == pytest.approx(8.0, rel=1e-12)


def test_zero_parallax_means_max_depth(small_intrinsics):
    motion = MotionTransform(np.eye(3), [1.0, 0.0, 0.0])
    depth, mask = depth_from_parallax(ParallaxMap(np.zeros((8, 8))), motion, small_intrinsics, 150.0)
    assert np.all(depth.values == 150.0)
    assert not mask.any()


@pytest.mark.parametrize('alternative', [False, True])
def test_parallax_depth_round_trip(alternative):
    rng = np.random.default_rng(8)
    intr = CameraIntrinsics.from_fov(4, 4, 90.0)
    checked = 0
    for _ in range(1000):
        motion = small_motion(rng)
        depth = DepthMap(rng.uniform(2.0, 50.0, size=(4, 4)), 200.0)
        parallax, forward_mask = parallax_from_depth(depth, motion, intr, alternative)
        recovered, inverse_mask = depth_from_parallax(parallax, motion, intr, 200.0, alternative)
        valid = forward_mask & inverse_mask
        assert np.allclose(recovered.values[valid], depth.values[valid], rtol=1e-6)
        checked += int(valid.sum())
    assert checked > 0.9 * 1000 * 16


# ============================================================================
# RECONSTRUCTION
# ============================================================================

def test_single_pixel_point_cloud():
    intr = CameraIntrinsics(fx=10.0, fy=10.0, cx=0.0, cy=0.0, width=1, height=1)
    cloud = point_cloud_from_maps(DepthMap([[5.0]], 200.0), np.array([[3]], dtype=np.uint8), intr, 200.0)
    assert len(cloud) == 1
    assert np.allclose(cloud.points[0], [0.0, 0.0, 5.0])
    assert cloud.labels[0] == 3


def test_truncation_at_max_depth_empties_cloud(small_intrinsics):
    depth = DepthMap(np.full((8, 8), 200.0), 200.0)
    cloud = point_cloud_from_maps(depth, np.zeros((8, 8), dtype=np.uint8), small_intrinsics, 200.0)
    assert len(cloud) == 0


def test_point_cloud_reprojects_to_source_pixels():
    rng = np.random.default_rng(9)
    for _ in range(1000):
        width, height = (int(v) for v in rng.integers(2, 9, size=2))
        intr = CameraIntrinsics.from_fov(width, height, float(rng.uniform(40.0, 120.0)))
        depth = DepthMap(rng.uniform(0.5, 300.0, size=(height, width)), 300.0)
        labels = rng.integers(0, 9, size=(height, width)).astype(np.uint8)
        cloud = point_cloud_from_maps(depth, labels, intr, 200.0)
        keep = depth.values < 200.0
        rows, cols = np.nonzero(keep)
        assert len(cloud) == keep.sum()
        if len(cloud):
            pixels = project(cloud.points, intr)
            assert np.all(np.abs(pixels[:, 0] - cols) <= 0.5)
            assert np.all(np.abs(pixels[:, 1] - rows) <= 0.5)
            assert np.array_equal(cloud.labels, labels[keep])


def test_point_cloud_file_round_trip(tmp_path, small_intrinsics):
    rng = np.random.default_rng(10)
    depth = DepthMap(rng.uniform(1.0, 20.0, size=(8, 8)), 200.0)
    rgb = rng.integers(0, 256, size=(8, 8, 3)).astype(np.uint8)
    labels = rng.integers(0, 9, size=(8, 8)).astype(np.uint8)
    cloud = point_cloud_from_maps(depth, labels, small_intrinsics, 200.0, rgb=rgb)
    loaded = read_point_cloud(write_point_cloud(cloud, str(tmp_path / 'cloud.txt')))
    assert np.allclose(loaded.points, cloud.points, rtol=1e-8)
    assert np.array_equal(loaded.labels, cloud.labels)
    assert np.array_equal(loaded.colors, cloud.colors)


def test_empty_point_cloud_file_has_header(tmp_path, small_intrinsics):
    depth = DepthMap(np.full((8, 8), 50.0), 200.0)
    cloud = point_cloud_from_maps(depth, np.zeros((8, 8), dtype=np.uint8), small_intrinsics, 10.0)
    path = write_point_cloud(cloud, str(tmp_path / 'empty.txt'))
    with open(path) as handle:
        assert handle.read().splitlines() == ['count 0', 'fields x y z label r g b']
    assert len(read_point_cloud(path)) == 0
