import os

import numpy as np
import pytest
import torch
from scipy.spatial.transform import Rotation

from aerodepth import create_app
from aerodepth.geometry.rotations import from_scipy
from aerodepth.models import CameraIntrinsics, MotionTransform, Pose
from aerodepth.network.config import ArchConfig
from aerodepth.services.dataset_service import dataset_service
from aerodepth.services.render_service import random_scene
from aerodepth.services.trajectory_service import trajectory_service

TOY_SIZE = 32
TOY_FRAMES = 6


@pytest.fixture
def app(tmp_path):
    return create_app('config.TestingConfig', OUTPUT_ROOT=str(tmp_path / 'runs'), LOG_TO_FILE=False)


@pytest.fixture
def intrinsics():
    return CameraIntrinsics(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=101, height=101)


@pytest.fixture
def small_intrinsics():
    return CameraIntrinsics.from_fov(8, 8, 90.0)


@pytest.fixture
def tiny_arch():
    """4-level network small enough for CPU tests on 32x32 inputs"""
    return ArchConfig(num_levels=4, filters_per_level=(8, 8, 16, 16), split_K_per_level=(1, 2, 2, 4),
                      sncv_radius=1, pscv_candidates=3, refiner_width=8, depth_refiner_layers=3,
                      semantic_refiner_layers=2, sequence_length=2, max_depth=200.0)


def random_pose(rng: np.random.Generator) -> Pose:
    rotation = Rotation.random(random_state=int(rng.integers(0, 2 ** 31)))
    return Pose(rng.uniform(-50.0, 50.0, size=3), from_scipy(rotation))


def small_motion(rng: np.random.Generator, max_angle_degrees: float = 8.0, max_translation: float = 1.0):
    rotation = Rotation.from_rotvec(np.radians(rng.uniform(-max_angle_degrees, max_angle_degrees, size=3)))
    translation = rng.uniform(-max_translation, max_translation, size=3)
    while np.linalg.norm(translation) < 1e-3:
        translation = rng.uniform(-max_translation, max_translation, size=3)
    return MotionTransform(rotation.as_matrix(), translation)


def build_toy_dataset(root, seed=0, frames=TOY_FRAMES, size=TOY_SIZE, trajectories=1, window=1, view='nadir'):
    """Render a small procedural dataset to `root` and return its manifest"""
    scene = random_scene(seed, view)
    intr = CameraIntrinsics.from_fov(size, size, 90.0)
    poses = []
    for trajectory_id in range(trajectories):
        _, trajectory = trajectory_service.build(seed + trajectory_id, frames, view, (20.0, 40.0),
                                                 leg_length=1.5 * (frames - 1) / 3)
        poses.append(trajectory)
    return dataset_service.generate_dataset(scene, poses, intr, str(root), max_depth=200.0, window=window,
                                            workers=1)


@pytest.fixture(scope='session')
def toy_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp('toy') / 'data'
    build_toy_dataset(root)
    return str(root)


@pytest.fixture(autouse=True)
def _seeded():
    torch.manual_seed(0)
    yield


def slow_enabled() -> bool:
    return os.environ.get('AERODEPTH_RUN_SLOW') == '1'
