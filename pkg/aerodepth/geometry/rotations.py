"""Quaternion helpers. Quaternions are (w, x, y, z); scipy stores (x, y, z, w)."""
import numpy as np
from scipy.spatial.transform import Rotation


def to_scipy(quaternion) -> Rotation:
    q = np.asarray(quaternion, dtype=np.float64).reshape(-1, 4)
    return Rotation.from_quat(q[:, [1, 2, 3, 0]]) if len(q) > 1 else Rotation.from_quat(q[0, [1, 2, 3, 0]])


def from_scipy(rotation: Rotation) -> np.ndarray:
    q = np.atleast_2d(rotation.as_quat())[:, [3, 0, 1, 2]]
    q = np.where(q[:, :1] < 0, -q, q)
    return q[0] if rotation.single else q


def matrix_from_quaternion(quaternion) -> np.ndarray:
    return to_scipy(quaternion).as_matrix()


def quaternion_from_matrix(matrix) -> np.ndarray:
    """Unit quaternion with the canonical sign w >= 0"""
    return from_scipy(Rotation.from_matrix(np.asarray(matrix, dtype=np.float64)))


def quaternion_from_euler(sequence: str, angles, degrees: bool = True) -> np.ndarray:
    return from_scipy(Rotation.from_euler(sequence, angles, degrees=degrees))


def nadir_quaternion(yaw_degrees: float = 0.0) -> np.ndarray:
    """Camera looking straight down (world Z up), image x along world X rotated by yaw"""
    down = Rotation.from_matrix(np.diag([1.0, -1.0, -1.0]))
    return from_scipy(Rotation.from_euler('z', yaw_degrees, degrees=True) * down)


def forward_quaternion(yaw_degrees: float = 0.0, pitch_down_degrees: float = 30.0) -> np.ndarray:
    """Camera looking along the horizon, tilted down by `pitch_down_degrees`"""
    # camera +z forward onto world +X, camera +y down onto world -Z
    level = Rotation.from_matrix(np.array([
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
    ]))
    tilt = Rotation.from_euler('x', -pitch_down_degrees, degrees=True)
    return from_scipy(Rotation.from_euler('z', yaw_degrees, degrees=True) * level * tilt)
