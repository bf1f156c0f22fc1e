"""
Building blocks shared by the encoder and both decoders: normalization,
cost volumes and the convolutional refiner stack. Tensors are (B, C, H, W).
"""
from typing import Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigError
from ..geometry.warping import depth_from_parallax_tensor, warp_tensor
from ..models import CameraIntrinsics

DINL_EPS = 1e-5
SPLIT_EPS = 1e-8
TRANSLATION_EPS = 1e-9


def dinl(features: torch.Tensor) -> torch.Tensor:
    """Per-image, per-channel standardization over spatial dims, no affine"""
    return F.instance_norm(features, eps=DINL_EPS)


def split_normalize(features: torch.Tensor, k: int) -> torch.Tensor:
    """Split channels into k contiguous groups and scale each per-pixel group to unit L2 norm"""
    batch, channels, height, width = features.shape
    if k < 1 or channels % k != 0:
        raise ConfigError(f"{channels} channels cannot be split into K={k} groups")
    grouped = features.reshape(batch, k, channels // k, height, width)
    return F.normalize(grouped, p=2, dim=2, eps=SPLIT_EPS).reshape(batch, channels, height, width)


def sncv(features: torch.Tensor, radius: int) -> torch.Tensor:
    """
    Spatial neighborhood cost volume.

    Channel (dy + r) * (2r + 1) + (dx + r) holds dot(f(p), f(p + (dy, dx))) / C;
    neighbors outside the map contribute 0.
    """
    _, channels, height, width = features.shape
    padded = F.pad(features, (radius, radius, radius, radius))
    costs = []
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            shifted = padded[:, :, radius + dy:radius + dy + height, radius + dx:radius + dx + width]
            costs.append((features * shifted).sum(dim=1) / channels)
    return torch.stack(costs, dim=1)


def candidate_factors(candidates: int, step: float) -> Tuple[float, ...]:
    """Multiplicative hypothesis schedule centred on 1"""
    middle = (candidates - 1) / 2.0
    return tuple(step ** (k - middle) for k in range(candidates))


def pscv(f_t: torch.Tensor, f_prev: torch.Tensor, parallax_est: torch.Tensor, rotation: torch.Tensor,
         translation: torch.Tensor, intr: CameraIntrinsics, candidates: int, step: float,
         max_depth: float, alternative_denominator: bool = False):
    """
    Parallax sweeping cost volume.

    For each candidate parallax_est * step^(k - (K-1)/2): convert to depth,
    warp f_prev onto the current frame, and score dot(f_t, warped) / C.
    Pixels whose warp leaves the previous frame score 0.

    Returns:
        (volume (B, candidates, H, W), degenerate (B,) bool); degenerate
        batch entries have zero translation and an all-zero volume
    """
    channels = f_t.shape[1]
    degenerate = translation.norm(dim=1) <= TRANSLATION_EPS
    costs = []
    for factor in candidate_factors(candidates, step):
        depth, _ = depth_from_parallax_tensor(parallax_est * factor, rotation, translation, intr,
                                              max_depth, alternative_denominator)
        warped, mask = warp_tensor(f_prev, depth, rotation, translation, intr, 'bilinear')
        cost = (f_t * warped).sum(dim=1) / channels
        costs.append(cost * mask[:, 0].to(cost.dtype))
    volume = torch.stack(costs, dim=1)
    keep = (~degenerate).to(volume.dtype).reshape(-1, 1, 1, 1)
    return volume * keep, degenerate


def conv3x3(in_channels: int, out_channels: int, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(in_channels, out_channels, kernel_size=3, stride=stride, padding=1)


def conv3x3_parameters(in_channels: int, out_channels: int) -> int:
    return 9 * in_channels * out_channels + out_channels


class Refiner(nn.Module):
    """Stack of 3x3 convolutions with leaky activations between them; the last layer is linear"""

    def __init__(self, in_channels: int, out_channels: int, layers: int, width: int, slope: float):
        super().__init__()
        widths = [in_channels] + [width] * (layers - 1) + [out_channels]
        self.convs = nn.ModuleList(conv3x3(a, b) for a, b in zip(widths[:-1], widths[1:]))
        self.slope = slope

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for index, conv in enumerate(self.convs):
            x = conv(x)
            if index < len(self.convs) - 1:
                x = F.leaky_relu(x, self.slope)
        return x


def upsample2(x: torch.Tensor, mode: str = 'bilinear') -> torch.Tensor:
    if mode == 'nearest':
        return F.interpolate(x, scale_factor=2, mode='nearest')
    return F.interpolate(x, scale_factor=2, mode=mode, align_corners=False)
