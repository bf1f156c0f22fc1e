"""
Depth and semantic decoders. Both walk the pyramid coarse to fine and keep
per-level outputs ordered coarsest first.
"""
from dataclasses import dataclass
from typing import List, Optional

import torch
import torch.nn as nn

from ..geometry.warping import depth_from_parallax_tensor, parallax_from_depth_tensor, warp_tensor
from ..models import CameraIntrinsics
from .config import ArchConfig
from .layers import Refiner, pscv, sncv, split_normalize, upsample2

LOG_PARALLAX_CLAMP = 15.0


def level_intrinsics(intr: CameraIntrinsics, level: int) -> CameraIntrinsics:
    """Intrinsics of pyramid level `level` (1 = half resolution)"""
    return intr.scaled(0.5 ** level)


@dataclass
class DepthState:
    """Per-level parallax and depth of the previous time step, coarsest first"""
    parallax: List[torch.Tensor]
    depth: List[torch.Tensor]


@dataclass
class DepthDecoderOutput:
    parallax: List[torch.Tensor]
    depth: List[torch.Tensor]
    depth_masks: List[torch.Tensor]
    features: List[torch.Tensor]
    degenerate: torch.Tensor

    def state(self) -> DepthState:
        return DepthState(parallax=list(self.parallax), depth=list(self.depth))


@dataclass
class SemanticDecoderOutput:
    logits: List[torch.Tensor]
    features: List[torch.Tensor]
    raw: List[torch.Tensor]


class DepthDecoder(nn.Module):
    """
    Per level: upscale the coarser parallax (x2 in size and value) and its
    features, recompute the previous step's parallax in the current frame,
    build the spatial (SNCV) and parallax-sweep (PSCV) cost volumes from
    split-normalized features, and refine into a new parallax map.
    """

    def __init__(self, arch: ArchConfig):
        super().__init__()
        self.arch = arch
        sncv_channels = (2 * arch.sncv_radius + 1) ** 2
        self.refiners = nn.ModuleList()
        for channels in reversed(arch.filters_per_level):
            in_channels = channels + sncv_channels + arch.pscv_candidates + 2 + arch.parallax_features
            self.refiners.append(Refiner(in_channels, arch.parallax_features + 1, arch.depth_refiner_layers,
                                         arch.refiner_width, arch.leaky_slope))

    def _recompute(self, prev_depth, geometry_depth, rotation, translation, intr):
        """Previous-step depth warped into the current frame, re-expressed as parallax"""
        max_depth = self.arch.max_depth
        warped, warp_mask = warp_tensor(prev_depth, geometry_depth, rotation, translation, intr, 'bilinear')
        warped = torch.where(warp_mask & (warped > 0), warped, torch.full_like(warped, max_depth))
        hint, mask = parallax_from_depth_tensor(warped, rotation, translation, intr,
                                                self.arch.alternative_denominator)
        return hint * (mask & warp_mask).to(hint.dtype)

    def forward(self, pyramid_t: List[torch.Tensor], pyramid_prev: List[torch.Tensor],
                state: Optional[DepthState], rotation: torch.Tensor, translation: torch.Tensor,
                intr: CameraIntrinsics) -> DepthDecoderOutput:
        """
        Args:
            pyramid_t, pyramid_prev: encoder pyramids, finest level first
            state: previous time step's outputs, or None for a cold start
            rotation, translation: (B, 3, 3), (B, 3) motion mapping current points into the previous frame
            intr: full-resolution intrinsics
        """
        arch = self.arch
        levels = arch.num_levels
        no_flags = torch.zeros(rotation.shape[0], dtype=torch.bool, device=rotation.device)
        outputs = DepthDecoderOutput([], [], [], [], no_flags)
        parallax_up = features_up = None

        for position, refiner in enumerate(self.refiners):
            level = levels - position
            lintr = level_intrinsics(intr, level)
            f_t = pyramid_t[level - 1]
            f_prev = pyramid_prev[level - 1]
            k = arch.split_K_per_level[level - 1]
            normalized_t = split_normalize(f_t, k)
            normalized_prev = split_normalize(f_prev, k)
            batch, _, height, width = f_t.shape

            if parallax_up is None:
                parallax_up = f_t.new_zeros(batch, 1, height, width)
                features_up = f_t.new_zeros(batch, arch.parallax_features, height, width)

            if state is None:
                hint = f_t.new_zeros(batch, 1, height, width)
            else:
                if position == 0:
                    geometry_depth = state.depth[position]
                else:
                    geometry_depth, _ = depth_from_parallax_tensor(parallax_up, rotation, translation, lintr,
                                                                   arch.max_depth, arch.alternative_denominator)
                hint = self._recompute(state.depth[position], geometry_depth, rotation, translation, lintr)

            estimate = hint if position == 0 else parallax_up
            sweep, degenerate = pscv(normalized_t, normalized_prev, estimate, rotation, translation, lintr,
                                     arch.pscv_candidates, arch.pscv_step, arch.max_depth,
                                     arch.alternative_denominator)
            spatial = sncv(normalized_t, arch.sncv_radius)
            x = torch.cat([normalized_t, spatial, sweep, torch.log1p(parallax_up), torch.log1p(hint),
                           features_up], dim=1)
            refined = refiner(x)
            features = refined[:, :arch.parallax_features]
            parallax = torch.exp(refined[:, arch.parallax_features:].clamp(-LOG_PARALLAX_CLAMP, LOG_PARALLAX_CLAMP))
            depth, depth_mask = depth_from_parallax_tensor(parallax, rotation, translation, lintr,
                                                           arch.max_depth, arch.alternative_denominator)

            outputs.parallax.append(parallax)
            outputs.depth.append(depth)
            outputs.depth_masks.append(depth_mask)
            outputs.features.append(features)
            outputs.degenerate = degenerate

            if level > 1:
                parallax_up = 2.0 * upsample2(parallax)
                features_up = upsample2(features)
        return outputs


class SemanticDecoder(nn.Module):
    """
    Single-image decoder: split-normalized encoder features plus the
    upscaled coarser logits and semantic features feed a refiner whose last
    layer emits semantic_features + num_classes channels.
    """

    def __init__(self, arch: ArchConfig):
        super().__init__()
        self.arch = arch
        extra = (2 * arch.sncv_radius + 1) ** 2 if arch.semantic_sncv else 0
        self.refiners = nn.ModuleList()
        for channels in reversed(arch.filters_per_level):
            in_channels = channels + extra + arch.num_classes + arch.semantic_features
            self.refiners.append(Refiner(in_channels, arch.semantic_features + arch.num_classes,
                                         arch.semantic_refiner_layers, arch.refiner_width, arch.leaky_slope))

    def forward(self, pyramid_t: List[torch.Tensor]) -> SemanticDecoderOutput:
        arch = self.arch
        outputs = SemanticDecoderOutput([], [], [])
        logits_up = features_up = None

        for position, refiner in enumerate(self.refiners):
            level = arch.num_levels - position
            f_t = pyramid_t[level - 1]
            normalized = split_normalize(f_t, arch.split_K_per_level[level - 1])
            batch, _, height, width = f_t.shape
            if logits_up is None:
                logits_up = f_t.new_zeros(batch, arch.num_classes, height, width)
                features_up = f_t.new_zeros(batch, arch.semantic_features, height, width)

            inputs = [normalized]
            if arch.semantic_sncv:
                inputs.append(sncv(normalized, arch.sncv_radius))
            inputs.extend([logits_up, features_up])
            raw = refiner(torch.cat(inputs, dim=1))
            features = raw[:, :arch.semantic_features]
            logits = raw[:, arch.semantic_features:]

            outputs.raw.append(raw)
            outputs.logits.append(logits)
            outputs.features.append(features)
            if level > 1:
                logits_up = upsample2(logits)
                features_up = upsample2(features)
        return outputs
