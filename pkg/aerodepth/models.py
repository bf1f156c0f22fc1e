"""
Domain records shared by the geometry kernel, the renderer, the network and
the training harness.

Camera frame convention everywhere: +z forward along the optical axis,
+x right, +y down. Quaternions are (w, x, y, z) and rotate camera-frame
vectors into the world frame.
"""
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Sequence, Tuple
import math

import numpy as np

from .errors import ConfigError, InvalidPoseError, InvalidDepthError, ShapeError

# ============================================================================
# SEMANTIC CLASSES
# ============================================================================

CLASS_NAMES = ('sky', 'water', 'trees', 'land', 'vehicle', 'rocks', 'road', 'building', 'others')
NUM_CLASSES = len(CLASS_NAMES)
SKY, WATER, TREES, LAND, VEHICLE, ROCKS, ROAD, BUILDING, OTHERS = range(NUM_CLASSES)

DEFAULT_PALETTE = (
    (135, 206, 235),  # sky
    (30, 90, 170),    # water
    (34, 120, 40),    # trees
    (150, 120, 80),   # land
    (220, 40, 40),    # vehicle
    (120, 120, 120),  # rocks
    (60, 60, 60),     # road
    (200, 170, 140),  # building
    (230, 200, 40),   # others
)

ROTATION_TOLERANCE = 1e-6


# ============================================================================
# CAMERA
# ============================================================================

@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters mapping camera-frame points to pixels"""
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigError(f"Focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"Image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ConfigError(
                f"Principal point ({self.cx}, {self.cy}) outside a {self.width}x{self.height} image"
            )

    @classmethod
    def from_fov(cls, width: int, height: int, fov_degrees: float = 90.0) -> 'CameraIntrinsics':
        """Symmetric camera with the given horizontal field of view"""
        focal = width / (2.0 * math.tan(math.radians(fov_degrees) / 2.0))
        return cls(fx=focal, fy=focal, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                   width=int(width), height=int(height))

    @property
    def matrix(self) -> np.ndarray:
        return np.array([
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    def scaled(self, factor: float) -> 'CameraIntrinsics':
        """Intrinsics of an image resampled by `factor` (pixel-center convention)"""
        return CameraIntrinsics(
            fx=self.fx * factor,
            fy=self.fy * factor,
            cx=(self.cx + 0.5) * factor - 0.5,
            cy=(self.cy + 0.5) * factor - 0.5,
            width=int(round(self.width * factor)),
            height=int(round(self.height * factor)),
        )

    def mirrored(self) -> 'CameraIntrinsics':
        """Intrinsics after a horizontal image flip"""
        return CameraIntrinsics(self.fx, self.fy, self.width - 1 - self.cx, self.cy, self.width, self.height)

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> 'CameraIntrinsics':
        return cls(fx=float(data['fx']), fy=float(data['fy']), cx=float(data['cx']),
                   cy=float(data['cy']), width=int(data['width']), height=int(data['height']))


@dataclass(frozen=True, eq=False)
class Pose:
    """Absolute 6-DoF camera pose: world position (m) and camera-to-world orientation"""
    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        position = np.asarray(self.position, dtype=np.float64).reshape(3)
        orientation = np.asarray(self.orientation, dtype=np.float64).reshape(4)
        norm = float(np.linalg.norm(orientation))
        if not np.all(np.isfinite(position)) or abs(norm - 1.0) > ROTATION_TOLERANCE:
            raise InvalidPoseError(f"Pose orientation must be a unit quaternion, got norm {norm:.9f}")
        object.__setattr__(self, 'position', position)
        object.__setattr__(self, 'orientation', orientation)

    @classmethod
    def identity(cls) -> 'Pose':
        return cls(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def from_matrix(cls, position, rotation) -> 'Pose':
        from .geometry.rotations import quaternion_from_matrix
        return cls(position, quaternion_from_matrix(rotation))

    @property
    def rotation_matrix(self) -> np.ndarray:
        from .geometry.rotations import matrix_from_quaternion
        return matrix_from_quaternion(self.orientation)

    def allclose(self, other: 'Pose', atol: float = 1e-9) -> bool:
        same_q = (np.allclose(self.orientation, other.orientation, atol=atol)
                  or np.allclose(self.orientation, -other.orientation, atol=atol))
        return bool(np.allclose(self.position, other.position, atol=atol) and same_q)


@dataclass(frozen=True, eq=False)
class MotionTransform:
    """Rigid transform ^aT_b mapping points expressed in frame b into frame a"""
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        orthonormal = np.allclose(rotation @ rotation.T, np.eye(3), atol=ROTATION_TOLERANCE)
        if not orthonormal or abs(np.linalg.det(rotation) - 1.0) > ROTATION_TOLERANCE:
            raise InvalidPoseError("Motion rotation must be orthonormal with determinant 1")
        object.__setattr__(self, 'rotation', rotation)
        object.__setattr__(self, 'translation', translation)

    @classmethod
    def identity(cls) -> 'MotionTransform':
        return cls(np.eye(3), np.zeros(3))

    def compose(self, other: 'MotionTransform') -> 'MotionTransform':
        """self ∘ other: ^aT_b · ^bT_c = ^aT_c"""
        return MotionTransform(self.rotation @ other.rotation,
                               self.rotation @ other.translation + self.translation)

    def inverse(self) -> 'MotionTransform':
        rotation_t = self.rotation.T
        return MotionTransform(rotation_t, -rotation_t @ self.translation)

    def as_matrix(self) -> np.ndarray:
        matrix = np.eye(4)
        matrix[:3, :3] = self.rotation
        matrix[:3, 3] = self.translation
        return matrix

    def conjugated(self, basis_change: np.ndarray) -> 'MotionTransform':
        """Same motion expressed after the camera axes are remapped by `basis_change`"""
        basis_change = np.asarray(basis_change, dtype=np.float64)
        return MotionTransform(basis_change @ self.rotation @ basis_change.T,
                               basis_change @ self.translation)

    def allclose(self, other: 'MotionTransform', atol: float = 1e-6) -> bool:
        return bool(np.allclose(self.rotation, other.rotation, atol=atol)
                    and np.allclose(self.translation, other.translation, atol=atol))


# ============================================================================
# DENSE MAPS
# ============================================================================

@dataclass(eq=False)
class DepthMap:
    """Optical-axis depth (m); background pixels carry exactly max_depth"""
    values: np.ndarray
    max_depth: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError(f"Depth map must be 2D, got shape {self.values.shape}")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def validate(self):
        if not np.all(self.values > 0):
            raise InvalidDepthError("Depth map contains non-positive values")
        if np.any(self.values > self.max_depth):
            raise InvalidDepthError(f"Depth map exceeds its ceiling of {self.max_depth} m")
        return self


@dataclass(eq=False)
class ParallaxMap:
    """Per-pixel parallax in pixel units"""
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError(f"Parallax map must be 2D, got shape {self.values.shape}")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape


@dataclass(eq=False)
class LabeledPointCloud:
    """Camera-frame points with a class label and a color per point"""
    points: np.ndarray
    labels: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        if not (len(self.points) == len(self.labels) == len(self.colors)):
            raise ShapeError("Point cloud points, labels and colors must have equal length")

    def __len__(self):
        return len(self.points)


# ============================================================================
# SYNTHETIC SCENES
# ============================================================================

PRIMITIVE_SHAPES = ('box', 'sphere', 'cone', 'plane-patch')


@dataclass(eq=False)
class Primitive:
    """A scene object. `size` is (sx, sy, sz) for boxes, (radius,) for spheres,
    (radius, height) for cones and (sx, sy) for plane patches, all in meters."""
    shape: str
    pose: Pose
    size: Tuple[float, ...]
    class_index: int
    color: Tuple[int, int, int]

    def __post_init__(self):
        if self.shape not in PRIMITIVE_SHAPES:
            raise ConfigError(f"Unknown primitive shape '{self.shape}'")
        if not 0 <= int(self.class_index) < NUM_CLASSES:
            raise ConfigError(f"Primitive class index {self.class_index} outside [0, {NUM_CLASSES - 1}]")
        self.size = tuple(float(s) for s in self.size)
        self.color = tuple(int(c) for c in self.color)

    def to_dict(self) -> Dict:
        return {
            'shape': self.shape,
            'position': self.pose.position.tolist(),
            'orientation': self.pose.orientation.tolist(),
            'size': list(self.size),
            'class_index': int(self.class_index),
            'color': list(self.color),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'Primitive':
        return cls(
            shape=data['shape'],
            pose=Pose(data.get('position', [0, 0, 0]), data.get('orientation', [1, 0, 0, 0])),
            size=tuple(data['size']),
            class_index=int(data['class_index']),
            color=tuple(data.get('color', DEFAULT_PALETTE[int(data['class_index'])])),
        )


@dataclass
class TerrainSpec:
    """Heightfield Z = amplitude * sin(2π f X) * cos(2π f Y); amplitude 0 is a flat ground plane"""
    amplitude: float = 0.0
    frequency: float = 0.01
    class_index: int = LAND
    color: Tuple[int, int, int] = DEFAULT_PALETTE[LAND]

    def height(self, x, y):
        if self.amplitude == 0.0:
            return np.zeros_like(np.asarray(x, dtype=np.float64))
        w = 2.0 * math.pi * self.frequency
        return self.amplitude * np.sin(w * x) * np.cos(w * y)

    def gradient(self, x, y):
        if self.amplitude == 0.0:
            zeros = np.zeros_like(np.asarray(x, dtype=np.float64))
            return zeros, zeros
        w = 2.0 * math.pi * self.frequency
        dx = self.amplitude * w * np.cos(w * x) * np.cos(w * y)
        dy = -self.amplitude * w * np.sin(w * x) * np.sin(w * y)
        return dx, dy


@dataclass(eq=False)
class SceneSpec:
    seed: int = 0
    terrain: Optional[TerrainSpec] = field(default_factory=TerrainSpec)
    primitives: List[Primitive] = field(default_factory=list)
    sky_color: Tuple[int, int, int] = DEFAULT_PALETTE[SKY]
    class_palette: Tuple[Tuple[int, int, int], ...] = DEFAULT_PALETTE

    def __post_init__(self):
        if len(self.class_palette) != NUM_CLASSES:
            raise ConfigError(f"Class palette must list {NUM_CLASSES} colors")

    def to_dict(self) -> Dict:
        return {
            'seed': int(self.seed),
            'terrain': None if self.terrain is None else {
                'amplitude': self.terrain.amplitude,
                'frequency': self.terrain.frequency,
                'class_index': self.terrain.class_index,
                'color': list(self.terrain.color),
            },
            'primitives': [p.to_dict() for p in self.primitives],
            'sky_color': list(self.sky_color),
            'class_palette': [list(c) for c in self.class_palette],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'SceneSpec':
        terrain = data.get('terrain', {})
        return cls(
            seed=int(data.get('seed', 0)),
            terrain=None if terrain is None else TerrainSpec(
                amplitude=float(terrain.get('amplitude', 0.0)),
                frequency=float(terrain.get('frequency', 0.01)),
                class_index=int(terrain.get('class_index', LAND)),
                color=tuple(terrain.get('color', DEFAULT_PALETTE[LAND])),
            ),
            primitives=[Primitive.from_dict(p) for p in data.get('primitives', [])],
            sky_color=tuple(data.get('sky_color', DEFAULT_PALETTE[SKY])),
            class_palette=tuple(tuple(c) for c in data.get('class_palette', DEFAULT_PALETTE)),
        )


@dataclass(eq=False)
class TrajectorySpec:
    waypoints: List[Pose]
    frame_count: int
    frame_rate: float = 20.0
    altitude_range: Tuple[float, float] = (10.0, 100.0)
    pitch_mode: str = 'nadir'

    def __post_init__(self):
        if self.frame_count < 2:
            raise ConfigError(f"A trajectory needs at least 2 frames, got {self.frame_count}")
        if self.pitch_mode not in ('nadir', 'forward'):
            raise ConfigError(f"Unknown pitch mode '{self.pitch_mode}'")
        if self.frame_rate <= 0:
            raise ConfigError("Frame rate must be positive")


@dataclass(eq=False)
class FrameSample:
    rgb: np.ndarray
    depth: DepthMap
    seg: np.ndarray
    pose: Pose
    intrinsics: CameraIntrinsics
    frame_index: int
    trajectory_id: int = 0

    def __post_init__(self):
        if self.rgb.shape != (self.intrinsics.height, self.intrinsics.width, 3):
            raise ShapeError(f"RGB shape {self.rgb.shape} does not match intrinsics "
                             f"{self.intrinsics.width}x{self.intrinsics.height}")
        if self.seg.shape != self.depth.shape or self.seg.shape != self.rgb.shape[:2]:
            raise ShapeError("RGB, depth and segmentation resolutions differ")


@dataclass(eq=False)
class SequenceSample:
    """n consecutive frames (oldest first) with the motions between them; GT of the last frame supervises"""
    rgb: List[np.ndarray]
    depth: List[np.ndarray]
    seg: List[np.ndarray]
    motions: List[MotionTransform]
    intrinsics: CameraIntrinsics
    max_depth: float = 200.0
    trajectory_id: int = 0
    frame_index: int = 0

    def __post_init__(self):
        if not (len(self.rgb) == len(self.depth) == len(self.seg)):
            raise ShapeError("Sequence rgb, depth and seg lists differ in length")
        if len(self.motions) != len(self.rgb) - 1:
            raise ShapeError(f"{len(self.rgb)} frames need {len(self.rgb) - 1} motions, got {len(self.motions)}")

    def __len__(self):
        return len(self.rgb)


# ============================================================================
# METRICS
# ============================================================================

@dataclass
class DepthMetrics:
    rmse: float
    abs_rel: float
    delta1: float
    delta2: float
    delta3: float
    median_abs_rel: Optional[float] = None

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class SegMetrics:
    """Per-class IoU with None for classes absent from both prediction and GT"""
    per_class_iou: Dict[int, Optional[float]]
    miou: float
    pixel_accuracy: float = float('nan')

    def to_dict(self) -> Dict:
        return {
            'per_class_iou': {str(k): v for k, v in self.per_class_iou.items()},
            'miou': self.miou,
            'pixel_accuracy': self.pixel_accuracy,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'SegMetrics':
        return cls(
            per_class_iou={int(k): v for k, v in data['per_class_iou'].items()},
            miou=float(data['miou']),
            pixel_accuracy=float(data.get('pixel_accuracy', float('nan'))),
        )


# ============================================================================
# TRAINING CONFIGURATION
# ============================================================================

@dataclass
class AugmentConfig:
    rotation: bool = True
    flip: bool = True
    color_jitter: bool = True
    view: str = 'nadir'  # nadir: multiples of 90 degrees, forward: +/- max_rotation_degrees
    max_rotation_degrees: float = 15.0
    brightness: float = 0.2
    contrast: float = 0.2
    saturation: float = 0.2
    hue: float = 0.05

    def __post_init__(self):
        if self.view not in ('nadir', 'forward'):
            raise ConfigError(f"Unknown augmentation view '{self.view}'")

    @classmethod
    def disabled(cls) -> 'AugmentConfig':
        return cls(rotation=False, flip=False, color_jitter=False)


@dataclass
class MixConfig:
    root_b: str
    ratio: str = '1:1'

    def __post_init__(self):
        self.ratio_parts()

    def ratio_parts(self) -> Tuple[int, int]:
        return parse_ratio(self.ratio)


def parse_ratio(ratio: str) -> Tuple[int, int]:
    """Parse an 'a:b' sampling ratio"""
    try:
        a, b = (int(part) for part in str(ratio).split(':'))
    except ValueError:
        raise ConfigError(f"Sampling ratio must look like 'a:b', got '{ratio}'")
    if a < 0 or b < 0 or a + b == 0:
        raise ConfigError(f"Sampling ratio '{ratio}' needs non-negative parts with a positive sum")
    return a, b


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    betas: Tuple[float, float] = (0.9, 0.999)
    batch_size: int = 3
    epochs: int = 60
    loss_weight: float = 0.15
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0
    sequence_length: int = 3
    max_depth_cap: float = 80.0
    mix: Optional[MixConfig] = None
    epoch_size: Optional[int] = None
    lr_drop_epoch: Optional[int] = None
    lr_drop_factor: float = 0.1
    include_sky: bool = True
    keep_all_checkpoints: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"Batch size must be at least 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError("Epoch count cannot be negative")
        if self.sequence_length < 1:
            raise ConfigError("Sequence length must be at least 1")
        if isinstance(self.augment, dict):
            self.augment = AugmentConfig(**self.augment)
        if isinstance(self.mix, dict):
            self.mix = MixConfig(**self.mix)
        self.betas = tuple(float(b) for b in self.betas)

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> 'TrainConfig':
        return cls(**data)


def stack_poses(poses: Sequence[Pose]) -> np.ndarray:
    """(N, 7) array of x, y, z, qw, qx, qy, qz rows"""
    return np.array([np.concatenate([p.position, p.orientation]) for p in poses]).reshape(-1, 7)
