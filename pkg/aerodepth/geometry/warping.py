"""
Dense reprojection kernels.

The tensor kernels work on batched (B, C, H, W) torch tensors and are
differentiable; they back both the numpy-facing operations below and the
network's cost volumes. `rotation` (B, 3, 3) and `translation` (B, 3) always
describe the motion that maps points of the frame being predicted into the
other frame, i.e. relative_transform(pose_other, pose_current).

Parallax convention: the virtual camera shares the current camera's center
and the other camera's orientation. For a pixel with ray K^-1 [i, j, 1]:
    b = R ray,  a = b_z,  z_V = a z
    (i_V, j_V) = (fx b_x / a, fy b_y / a)          principal-point centred
    N = || (fx tx - tz i_V, fy ty - tz j_V) ||
    rho = N / (z z_V + tz)                          as printed
    rho = N / (z (z_V + tz))                        alternative reading
"""
import logging
from typing import Tuple

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import ShapeError
from ..models import CameraIntrinsics, DepthMap, MotionTransform, ParallaxMap

logger = logging.getLogger(__name__)

EPS = 1e-9
BOUNDS_TOLERANCE = 1e-6
WARP_FILL_VALUE = 0.0


# ============================================================================
# TENSOR KERNELS
# ============================================================================

def _pixel_rays(height, width, intr: CameraIntrinsics, dtype, device):
    """Rays K^-1 [i, j, 1] as a (3, H*W) tensor"""
    j, i = torch.meshgrid(
        torch.arange(height, dtype=dtype, device=device),
        torch.arange(width, dtype=dtype, device=device),
        indexing='ij',
    )
    x = (i.reshape(-1) - intr.cx) / intr.fx
    y = (j.reshape(-1) - intr.cy) / intr.fy
    return torch.stack([x, y, torch.ones_like(x)], dim=0)


def _safe_sqrt(values: torch.Tensor) -> torch.Tensor:
    positive = values > 0
    return torch.where(positive, torch.sqrt(torch.where(positive, values, torch.ones_like(values))),
                       torch.zeros_like(values))


def reproject_tensor(depth: torch.Tensor, rotation: torch.Tensor, translation: torch.Tensor,
                     intr: CameraIntrinsics):
    """
    Reproject every pixel of `depth` (B, 1, H, W) into the other frame.

    Returns:
        (i', j', z') each shaped (B, H, W)
    """
    batch, _, height, width = depth.shape
    rays = _pixel_rays(height, width, intr, depth.dtype, depth.device)
    points = rays.unsqueeze(0) * depth.reshape(batch, 1, -1)
    moved = torch.bmm(rotation.to(depth.dtype), points) + translation.to(depth.dtype).reshape(batch, 3, 1)
    z = moved[:, 2]
    in_front = z > EPS
    safe_z = torch.where(in_front, z, torch.ones_like(z))
    i = intr.fx * moved[:, 0] / safe_z + intr.cx
    j = intr.fy * moved[:, 1] / safe_z + intr.cy
    shape = (batch, height, width)
    return i.reshape(shape), j.reshape(shape), z.reshape(shape)


def warp_tensor(source: torch.Tensor, depth: torch.Tensor, rotation: torch.Tensor,
                translation: torch.Tensor, intr: CameraIntrinsics,
                interpolation: str = 'bilinear') -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Resample `source` (B, C, H, W), expressed in the other frame, onto the
    pixels of the frame whose depth is `depth` (B, 1, H, W).

    Returns:
        (warped, mask) where invalid pixels are WARP_FILL_VALUE and mask is (B, 1, H, W) bool
    """
    if source.shape[0] != depth.shape[0] or source.shape[-2:] != depth.shape[-2:]:
        raise ShapeError(f"Warp source {tuple(source.shape)} and depth {tuple(depth.shape)} differ in size")
    batch, channels, height, width = source.shape
    i, j, z = reproject_tensor(depth, rotation, translation, intr)
    valid = ((z > EPS)
             & (i >= -BOUNDS_TOLERANCE) & (i <= width - 1 + BOUNDS_TOLERANCE)
             & (j >= -BOUNDS_TOLERANCE) & (j <= height - 1 + BOUNDS_TOLERANCE))
    i = torch.where(valid, i, torch.zeros_like(i)).clamp(0, width - 1)
    j = torch.where(valid, j, torch.zeros_like(j)).clamp(0, height - 1)
    mask = valid.unsqueeze(1)

    if interpolation == 'nearest':
        index = (torch.round(j).long() * width + torch.round(i).long()).reshape(batch, 1, -1)
        flat = source.reshape(batch, channels, -1)
        warped = torch.gather(flat, 2, index.expand(batch, channels, -1)).reshape(source.shape)
    elif interpolation == 'bilinear':
        grid_x = 2.0 * i / max(width - 1, 1) - 1.0
        grid_y = 2.0 * j / max(height - 1, 1) - 1.0
        grid = torch.stack([grid_x, grid_y], dim=-1).to(source.dtype)
        warped = F.grid_sample(source, grid, mode='bilinear', padding_mode='zeros', align_corners=True)
    else:
        raise ShapeError(f"Unknown interpolation '{interpolation}'")

    fill = torch.full_like(warped, WARP_FILL_VALUE)
    return torch.where(mask, warped, fill), mask


def _parallax_terms(height, width, rotation, translation, intr, dtype, device):
    """Depth-independent pieces of the parallax equation: (N, a, tz), each (B, H, W)"""
    batch = rotation.shape[0]
    rays = _pixel_rays(height, width, intr, dtype, device)
    rotated = torch.matmul(rotation.to(dtype), rays)  # (B, 3, HW)
    a = rotated[:, 2]
    facing = a > EPS
    safe_a = torch.where(facing, a, torch.ones_like(a))
    i_v = intr.fx * rotated[:, 0] / safe_a
    j_v = intr.fy * rotated[:, 1] / safe_a
    translation = translation.to(dtype)
    tx, ty, tz = (translation[:, k:k + 1] for k in range(3))
    numerator = _safe_sqrt((intr.fx * tx - tz * i_v) ** 2 + (intr.fy * ty - tz * j_v) ** 2)
    numerator = torch.where(facing, numerator, torch.zeros_like(numerator))
    shape = (batch, height, width)
    return numerator.reshape(shape), a.reshape(shape), tz.expand(-1, height * width).reshape(shape)


def parallax_from_depth_tensor(depth: torch.Tensor, rotation: torch.Tensor, translation: torch.Tensor,
                               intr: CameraIntrinsics, alternative_denominator: bool = False):
    """
    Per-pixel parallax from depth (B, 1, H, W).

    Returns:
        (parallax, mask) both (B, 1, H, W); pixels with a non-positive denominator are 0 and masked
    """
    _, _, height, width = depth.shape
    numerator, a, tz = _parallax_terms(height, width, rotation, translation, intr, depth.dtype, depth.device)
    z = depth[:, 0]
    z_virtual = a * z
    if alternative_denominator:
        denominator = z * (z_virtual + tz)
    else:
        denominator = z * z_virtual + tz
    valid = (denominator > EPS) & (a > EPS)
    safe = torch.where(valid, denominator, torch.ones_like(denominator))
    parallax = torch.where(valid, numerator / safe, torch.zeros_like(numerator))
    return parallax.unsqueeze(1), valid.unsqueeze(1)


def depth_from_parallax_tensor(parallax: torch.Tensor, rotation: torch.Tensor, translation: torch.Tensor,
                               intr: CameraIntrinsics, max_depth: float,
                               alternative_denominator: bool = False):
    """
    Invert the parallax equation for z. Pixels with zero parallax, zero
    numerator, or no positive solution are set to max_depth and masked.

    Returns:
        (depth, mask) both (B, 1, H, W)
    """
    _, _, height, width = parallax.shape
    numerator, a, tz = _parallax_terms(height, width, rotation, translation, intr,
                                       parallax.dtype, parallax.device)
    rho = parallax[:, 0]
    usable = (rho > EPS) & (numerator > EPS) & (a > EPS)
    c = numerator / torch.where(usable, rho, torch.ones_like(rho))
    safe_a = torch.where(usable, a, torch.ones_like(a))

    if alternative_denominator:
        # a z^2 + tz z - c = 0, positive root in its cancellation-free form
        s = _safe_sqrt(tz * tz + 4.0 * safe_a * c)
        forward = tz >= 0
        den = torch.where(forward, tz + s, 2.0 * safe_a)
        num = torch.where(forward, 2.0 * c, s - tz)
        usable = usable & (den > EPS)
        z = num / torch.where(usable, den, torch.ones_like(den))
    else:
        squared = (c - tz) / safe_a
        usable = usable & (squared > 0)
        z = _safe_sqrt(squared)

    usable = usable & (z > 0) & (z <= max_depth)
    depth = torch.where(usable, z, torch.full_like(z, float(max_depth)))
    return depth.unsqueeze(1), usable.unsqueeze(1)


# ============================================================================
# NUMPY-FACING OPERATIONS
# ============================================================================

def motion_tensors(motion: MotionTransform, dtype=torch.float64):
    rotation = torch.as_tensor(motion.rotation, dtype=dtype).unsqueeze(0)
    translation = torch.as_tensor(motion.translation, dtype=dtype).unsqueeze(0)
    return rotation, translation


def _map_tensor(values: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(np.asarray(values, dtype=np.float64)).reshape(1, 1, *np.shape(values))


def _check_resolution(values: np.ndarray, intr: CameraIntrinsics, name: str):
    if tuple(values.shape[:2]) != intr.shape:
        raise ShapeError(f"{name} of shape {values.shape[:2]} does not match intrinsics {intr.shape}")


def warp_map(source_map: np.ndarray, depth: DepthMap, motion: MotionTransform, intr: CameraIntrinsics,
             interpolation: str = 'bilinear') -> Tuple[np.ndarray, np.ndarray]:
    """
    Warp a map from the other frame onto the frame described by `depth`.

    Args:
        source_map: (H, W) or (H, W, C) map expressed in the other frame
        depth: depth of the frame being reconstructed
        motion: relative_transform(pose_other, pose_current)
        intr: shared intrinsics
        interpolation: 'nearest' (class maps) or 'bilinear'

    Returns:
        (warped map with the source dtype, validity mask)
    """
    source_map = np.asarray(source_map)
    if source_map.shape[:2] != depth.shape:
        raise ShapeError(f"Source map {source_map.shape[:2]} and depth {depth.shape} differ in resolution")
    _check_resolution(depth.values, intr, 'Depth map')
    channels_last = source_map.ndim == 3
    source = source_map if channels_last else source_map[..., None]
    source_t = torch.as_tensor(source.astype(np.float64)).permute(2, 0, 1).unsqueeze(0)
    rotation, translation = motion_tensors(motion)
    with torch.no_grad():
        warped, mask = warp_tensor(source_t, _map_tensor(depth.values), rotation, translation, intr, interpolation)
    warped = warped[0].permute(1, 2, 0).numpy()
    if not channels_last:
        warped = warped[..., 0]
    if np.issubdtype(source_map.dtype, np.integer):
        warped = np.rint(warped)
    return warped.astype(source_map.dtype), mask[0, 0].numpy()


def reprojection_coordinates(depth: DepthMap, motion: MotionTransform, intr: CameraIntrinsics):
    """(i', j', z') arrays: where each pixel lands in the other frame"""
    rotation, translation = motion_tensors(motion)
    with torch.no_grad():
        i, j, z = reproject_tensor(_map_tensor(depth.values), rotation, translation, intr)
    return i[0].numpy(), j[0].numpy(), z[0].numpy()


def reprojected_depth(depth: DepthMap, motion: MotionTransform, intr: CameraIntrinsics) -> np.ndarray:
    """Optical-axis depth of every pixel's point in the other frame"""
    return reprojection_coordinates(depth, motion, intr)[2]


def parallax_from_depth(depth: DepthMap, motion: MotionTransform, intr: CameraIntrinsics,
                        alternative_denominator: bool = False) -> Tuple[ParallaxMap, np.ndarray]:
    _check_resolution(depth.values, intr, 'Depth map')
    rotation, translation = motion_tensors(motion)
    with torch.no_grad():
        parallax, mask = parallax_from_depth_tensor(_map_tensor(depth.values), rotation, translation,
                                                    intr, alternative_denominator)
    return ParallaxMap(parallax[0, 0].numpy()), mask[0, 0].numpy()


def depth_from_parallax(parallax: ParallaxMap, motion: MotionTransform, intr: CameraIntrinsics,
                        max_depth: float = 200.0,
                        alternative_denominator: bool = False) -> Tuple[DepthMap, np.ndarray]:
    _check_resolution(parallax.values, intr, 'Parallax map')
    rotation, translation = motion_tensors(motion)
    with torch.no_grad():
        depth, mask = depth_from_parallax_tensor(_map_tensor(parallax.values), rotation, translation,
                                                 intr, max_depth, alternative_denominator)
    return DepthMap(depth[0, 0].numpy(), max_depth), mask[0, 0].numpy()
