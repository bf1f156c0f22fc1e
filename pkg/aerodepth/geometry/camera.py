"""
Pinhole camera model and rigid-motion algebra.

Pixel coordinates are (i, j) with i along image columns and j along rows:
    i = fx * x / z + cx
    j = fy * y / z + cy
"""
import logging
from typing import Tuple

import numpy as np

from ..errors import BehindCameraError, InvalidDepthError, InvalidPoseError
from ..models import CameraIntrinsics, MotionTransform, Pose

logger = logging.getLogger(__name__)


def relative_transform(pose_a: Pose, pose_b: Pose) -> MotionTransform:
    """
    Motion ^aT_b mapping points expressed in camera b into camera a.

    Args:
        pose_a: reference pose (the frame results are expressed in)
        pose_b: other pose

    Returns:
        MotionTransform with translation R_a^-1 (p_b - p_a) and rotation R_a^-1 R_b
    """
    for pose in (pose_a, pose_b):
        norm = float(np.linalg.norm(pose.orientation))
        if abs(norm - 1.0) > 1e-6:
            raise InvalidPoseError(f"Pose orientation must be a unit quaternion, got norm {norm:.9f}")
    rotation_a_inv = pose_a.rotation_matrix.T
    translation = rotation_a_inv @ (pose_b.position - pose_a.position)
    rotation = rotation_a_inv @ pose_b.rotation_matrix
    # re-orthonormalize accumulated float error
    u, _, vt = np.linalg.svd(rotation)
    return MotionTransform(u @ vt, translation)


def compose_transforms(first: MotionTransform, second: MotionTransform) -> MotionTransform:
    return first.compose(second)


def invert_transform(transform: MotionTransform) -> MotionTransform:
    return transform.inverse()


def transform_points(points: np.ndarray, motion: MotionTransform) -> np.ndarray:
    """Apply motion to (..., 3) points"""
    points = np.asarray(points, dtype=np.float64)
    return points @ motion.rotation.T + motion.translation


def project(point, intr: CameraIntrinsics) -> np.ndarray:
    """Project one (3,) point or a batch (N, 3) to pixel coordinates (i, j)"""
    point = np.asarray(point, dtype=np.float64)
    z = point[..., 2]
    if np.any(z <= 0):
        raise BehindCameraError("Cannot project a point at or behind the camera plane (z <= 0)")
    i = intr.fx * point[..., 0] / z + intr.cx
    j = intr.fy * point[..., 1] / z + intr.cy
    return np.stack([i, j], axis=-1)


def unproject(pixel, depth, intr: CameraIntrinsics) -> np.ndarray:
    """Back-project pixel(s) (i, j) at optical-axis depth to camera-frame points"""
    pixel = np.asarray(pixel, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= 0):
        raise InvalidDepthError("Depth must be positive to unproject")
    x = (pixel[..., 0] - intr.cx) * depth / intr.fx
    y = (pixel[..., 1] - intr.cy) * depth / intr.fy
    return np.stack([x, y, np.broadcast_to(depth, x.shape)], axis=-1)


def pixel_grid(height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
    """(i, j) coordinate arrays of shape (height, width)"""
    j, i = np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing='ij')
    return i, j


def unproject_map(depth: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """(H, W, 3) camera-frame points of every pixel"""
    i, j = pixel_grid(*depth.shape)
    return unproject(np.stack([i, j], axis=-1), depth, intr)
