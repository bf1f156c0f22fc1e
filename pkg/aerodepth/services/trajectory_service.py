"""
Smooth camera trajectories through waypoints
"""
import logging
from typing import List, Tuple

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial.transform import Rotation, Slerp

from ..errors import TrajectoryError
from ..geometry.rotations import forward_quaternion, from_scipy, nadir_quaternion, to_scipy
from ..models import Pose, TrajectorySpec

logger = logging.getLogger(__name__)

COINCIDENT_TOLERANCE = 1e-9


def _same_pose(a: Pose, b: Pose) -> bool:
    return a.allclose(b, atol=COINCIDENT_TOLERANCE)


def generate_trajectory(spec: TrajectorySpec) -> List[Pose]:
    """
    Interpolate `spec.frame_count` poses through the waypoints.

    Positions follow a cubic spline over a uniform waypoint index (straight
    lines for two waypoints); orientations follow spherical-linear
    interpolation between consecutive waypoints.

    Raises:
        TrajectoryError: fewer than two waypoints, or consecutive coincident
            waypoints on a path that otherwise moves
    """
    waypoints = list(spec.waypoints)
    if len(waypoints) < 2:
        raise TrajectoryError(f"A trajectory needs at least 2 waypoints, got {len(waypoints)}")

    if all(_same_pose(waypoints[0], w) for w in waypoints[1:]):
        return [Pose(waypoints[0].position.copy(), waypoints[0].orientation.copy())
                for _ in range(spec.frame_count)]

    for index in range(1, len(waypoints)):
        if _same_pose(waypoints[index - 1], waypoints[index]):
            raise TrajectoryError(f"Waypoints {index - 1} and {index} coincide; the spline is degenerate there")

    knots = np.arange(len(waypoints), dtype=np.float64)
    samples = np.linspace(0.0, knots[-1], spec.frame_count)
    positions = np.stack([w.position for w in waypoints])
    if len(waypoints) == 2:
        fractions = samples[:, None]
        interpolated = positions[0] * (1.0 - fractions) + positions[1] * fractions
    else:
        interpolated = CubicSpline(knots, positions, axis=0)(samples)

    rotations = Rotation.concatenate([to_scipy(w.orientation) for w in waypoints])
    orientations = from_scipy(Slerp(knots, rotations)(samples))
    orientations = orientations / np.linalg.norm(orientations, axis=1, keepdims=True)

    return [Pose(p, q) for p, q in zip(interpolated, orientations)]


def plan_waypoints(seed: int, count: int = 4, altitude_range: Tuple[float, float] = (10.0, 100.0),
                   pitch_mode: str = 'nadir', leg_length: float = 30.0,
                   extent: float = 120.0) -> List[Pose]:
    """Random flight plan: gentle heading changes, altitude drawn from altitude_range"""
    if count < 2:
        raise TrajectoryError("A flight plan needs at least 2 waypoints")
    rng = np.random.default_rng(seed)
    low, high = altitude_range
    heading = float(rng.uniform(0.0, 360.0))
    position = np.array([*rng.uniform(-extent / 4, extent / 4, size=2), rng.uniform(low, high)])
    waypoints = []
    for _ in range(count):
        if pitch_mode == 'forward':
            orientation = forward_quaternion(heading, float(rng.uniform(15.0, 35.0)))
        else:
            orientation = nadir_quaternion(heading)
        waypoints.append(Pose(position.copy(), orientation))
        heading += float(rng.uniform(-25.0, 25.0))
        step = leg_length * np.array([np.cos(np.radians(heading)), np.sin(np.radians(heading))])
        altitude = float(np.clip(position[2] + rng.uniform(-0.1, 0.1) * (high - low), low, high))
        position = np.array([position[0] + step[0], position[1] + step[1], altitude])
    return waypoints


class TrajectoryService:
    def build(self, seed: int, frame_count: int, pitch_mode: str = 'nadir',
              altitude_range: Tuple[float, float] = (10.0, 100.0), frame_rate: float = 20.0,
              waypoint_count: int = 4, leg_length: float = 30.0) -> Tuple[TrajectorySpec, List[Pose]]:
        """Plan waypoints for a seed and interpolate them"""
        waypoints = plan_waypoints(seed, waypoint_count, altitude_range, pitch_mode, leg_length)
        spec = TrajectorySpec(waypoints=waypoints, frame_count=frame_count, frame_rate=frame_rate,
                              altitude_range=altitude_range, pitch_mode=pitch_mode)
        poses = generate_trajectory(spec)
        logger.debug(f"Trajectory seed {seed}: {frame_count} frames through {waypoint_count} waypoints")
        return spec, poses


trajectory_service = TrajectoryService()
