"""
Pose-consistent augmentation of frame sequences.

Geometric operations are applied identically to every frame and remap the
camera axes by a matrix M; motions are conjugated (r' = M r M^T, t' = M t)
so that reprojection with the augmented data stays exact.
"""
import logging
import math
from typing import Optional

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv
from scipy import ndimage

from ..errors import ConfigError
from ..models import AugmentConfig, CameraIntrinsics, SequenceSample

logger = logging.getLogger(__name__)

MIRROR = np.diag([-1.0, 1.0, 1.0])


def optical_axis_rotation(degrees: float) -> np.ndarray:
    """Camera-frame rotation about +z; image content turns by the same angle about the principal point"""
    theta = math.radians(degrees)
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _with(sample: SequenceSample, **changes) -> SequenceSample:
    fields = dict(rgb=sample.rgb, depth=sample.depth, seg=sample.seg, motions=sample.motions,
                  intrinsics=sample.intrinsics, max_depth=sample.max_depth,
                  trajectory_id=sample.trajectory_id, frame_index=sample.frame_index)
    fields.update(changes)
    return SequenceSample(**fields)


def flip_sequence(sample: SequenceSample) -> SequenceSample:
    """Horizontal mirror of every frame; x axis negated"""
    return _with(
        sample,
        rgb=[np.ascontiguousarray(f[:, ::-1]) for f in sample.rgb],
        depth=[np.ascontiguousarray(d[:, ::-1]) for d in sample.depth],
        seg=[np.ascontiguousarray(s[:, ::-1]) for s in sample.seg],
        motions=[m.conjugated(MIRROR) for m in sample.motions],
        intrinsics=sample.intrinsics.mirrored(),
    )


def _require_square_pixels(intr: CameraIntrinsics):
    if not math.isclose(intr.fx, intr.fy, rel_tol=1e-9):
        raise ConfigError("Rotation augmentation needs fx == fy")


def rotate90_sequence(sample: SequenceSample, quarter_turns: int) -> SequenceSample:
    """
    np.rot90 by `quarter_turns` on every map (counter-clockwise on screen).
    One turn remaps camera axes by (x, y, z) -> (y, -x, z).
    """
    quarter_turns %= 4
    if quarter_turns == 0:
        return sample
    intr = sample.intrinsics
    _require_square_pixels(intr)
    axes = optical_axis_rotation(-90.0 * quarter_turns)
    axes = np.rint(axes)

    for _ in range(quarter_turns):
        intr = CameraIntrinsics(fx=intr.fy, fy=intr.fx, cx=intr.cy, cy=intr.width - 1 - intr.cx,
                                width=intr.height, height=intr.width)
    return _with(
        sample,
        rgb=[np.ascontiguousarray(np.rot90(f, quarter_turns)) for f in sample.rgb],
        depth=[np.ascontiguousarray(np.rot90(d, quarter_turns)) for d in sample.depth],
        seg=[np.ascontiguousarray(np.rot90(s, quarter_turns)) for s in sample.seg],
        motions=[m.conjugated(axes) for m in sample.motions],
        intrinsics=intr,
    )


def _resample(image: np.ndarray, rows: np.ndarray, cols: np.ndarray, order: int) -> np.ndarray:
    if image.ndim == 3:
        channels = [ndimage.map_coordinates(image[..., c].astype(np.float64), [rows, cols], order=order,
                                            mode='nearest') for c in range(image.shape[2])]
        result = np.stack(channels, axis=-1)
    else:
        result = ndimage.map_coordinates(image.astype(np.float64), [rows, cols], order=order, mode='nearest')
    if np.issubdtype(image.dtype, np.integer):
        result = np.clip(np.rint(result), np.iinfo(image.dtype).min, np.iinfo(image.dtype).max)
    return result.astype(image.dtype)


def rotate_sequence(sample: SequenceSample, degrees: float) -> SequenceSample:
    """
    Rotate every frame by `degrees` about the principal point. Depth and
    classes use nearest sampling; borders clamp to the nearest edge pixel.
    """
    intr = sample.intrinsics
    _require_square_pixels(intr)
    axes = optical_axis_rotation(degrees)
    j, i = np.meshgrid(np.arange(intr.height, dtype=np.float64), np.arange(intr.width, dtype=np.float64),
                       indexing='ij')
    # output pixel u' = M u, so sample the source at M^T u'
    u, v = i - intr.cx, j - intr.cy
    source_u = axes[0, 0] * u + axes[1, 0] * v
    source_v = axes[0, 1] * u + axes[1, 1] * v
    rows, cols = source_v + intr.cy, source_u + intr.cx
    return _with(
        sample,
        rgb=[_resample(f, rows, cols, 1) for f in sample.rgb],
        depth=[_resample(d, rows, cols, 0) for d in sample.depth],
        seg=[_resample(s, rows, cols, 0) for s in sample.seg],
        motions=[m.conjugated(axes) for m in sample.motions],
    )


def jitter_colors(rgb: np.ndarray, brightness: float, contrast: float, saturation: float,
                  hue_shift: float) -> np.ndarray:
    """Multiplicative brightness/contrast/saturation factors and an additive hue shift"""
    image = rgb.astype(np.float64) / 255.0
    image = image * brightness
    mean = image.mean()
    image = (image - mean) * contrast + mean
    hsv = rgb_to_hsv(np.clip(image, 0.0, 1.0))
    hsv[..., 0] = (hsv[..., 0] + hue_shift) % 1.0
    hsv[..., 1] = np.clip(hsv[..., 1] * saturation, 0.0, 1.0)
    return np.clip(np.rint(hsv_to_rgb(hsv) * 255.0), 0, 255).astype(np.uint8)


def augment(sample: SequenceSample, config: AugmentConfig, rng: Optional[np.random.Generator] = None) -> SequenceSample:
    """
    Apply the enabled augmentations with draws from `rng`. Every frame of the
    sequence receives the same transform.
    """
    if not (config.flip or config.rotation or config.color_jitter):
        return sample
    rng = rng or np.random.default_rng(0)

    if config.flip and rng.random() < 0.5:
        sample = flip_sequence(sample)

    if config.rotation:
        if config.view == 'nadir':
            quarter_turns = int(rng.integers(0, 4))
            if sample.intrinsics.width != sample.intrinsics.height:
                quarter_turns = 2 * (quarter_turns % 2)
            sample = rotate90_sequence(sample, quarter_turns)
        else:
            limit = config.max_rotation_degrees
            sample = rotate_sequence(sample, float(rng.uniform(-limit, limit)))

    if config.color_jitter:
        brightness = float(rng.uniform(1.0 - config.brightness, 1.0 + config.brightness))
        contrast = float(rng.uniform(1.0 - config.contrast, 1.0 + config.contrast))
        saturation = float(rng.uniform(1.0 - config.saturation, 1.0 + config.saturation))
        hue_shift = float(rng.uniform(-config.hue, config.hue))
        sample = _with(sample, rgb=[jitter_colors(f, brightness, contrast, saturation, hue_shift)
                                    for f in sample.rgb])
    return sample
