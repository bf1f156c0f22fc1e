import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ContractError, ShapeError
from ..models import CameraIntrinsics, DepthMap, MotionTransform
from .config import ArchConfig
from .decoders import DepthDecoder, SemanticDecoder
from .encoder import PyramidEncoder
from .layers import upsample2

logger = logging.getLogger(__name__)


@dataclass
class JointOutput:
    """Network outputs at input resolution plus per-level maps (coarsest first)"""
    depth: Optional[torch.Tensor] = None
    depth_mask: Optional[torch.Tensor] = None
    parallax: Optional[torch.Tensor] = None
    seg_logits: Optional[torch.Tensor] = None
    seg_probs: Optional[torch.Tensor] = None
    parallax_levels: List[torch.Tensor] = field(default_factory=list)
    depth_levels: List[torch.Tensor] = field(default_factory=list)
    depth_mask_levels: List[torch.Tensor] = field(default_factory=list)
    seg_levels: List[torch.Tensor] = field(default_factory=list)
    seg_raw_levels: List[torch.Tensor] = field(default_factory=list)
    degenerate: Optional[torch.Tensor] = None

    def depth_map(self, index: int = 0, max_depth: float = 200.0) -> DepthMap:
        return DepthMap(self.depth[index, 0].detach().cpu().double().numpy(), max_depth)

    def seg_classes(self, index: int = 0) -> np.ndarray:
        return self.seg_logits[index].argmax(dim=0).detach().cpu().numpy().astype(np.uint8)


class JointDepthSegNet(nn.Module):
    """
    Shared pyramid encoder with a depth decoder and a semantic decoder.
    `arch.tasks` selects the joint model or either single-task variant.
    """

    def __init__(self, arch: Optional[ArchConfig] = None):
        super().__init__()
        self.arch = arch or ArchConfig()
        self.encoder = PyramidEncoder(self.arch)
        self.depth_decoder = DepthDecoder(self.arch) if self.arch.has_depth else None
        self.semantic_decoder = SemanticDecoder(self.arch) if self.arch.has_semantic else None

    def forward(self, frames: torch.Tensor, rotations: Optional[torch.Tensor], translations: Optional[torch.Tensor],
                intr: CameraIntrinsics) -> JointOutput:
        """
        Args:
            frames: (B, n, 3, H, W) sequence, oldest first; outputs describe the last frame
            rotations: (B, n-1, 3, 3) motions relative_transform(pose_{t-1}, pose_t)
            translations: (B, n-1, 3)
            intr: intrinsics of the input resolution

        Returns:
            JointOutput
        """
        if frames.ndim != 5 or frames.shape[2] != 3:
            raise ShapeError(f"Expected frames shaped (B, n, 3, H, W), got {tuple(frames.shape)}")
        batch, length = frames.shape[:2]
        if tuple(frames.shape[-2:]) != intr.shape:
            raise ShapeError(f"Frames {tuple(frames.shape[-2:])} do not match intrinsics {intr.shape}")
        motion_count = 0 if rotations is None else rotations.shape[1]
        if self.arch.has_depth:
            if length < 2:
                raise ContractError("The depth task needs a sequence of at least 2 frames")
            if motion_count != length - 1 or translations is None or translations.shape[1] != length - 1:
                raise ContractError(f"{length} frames need {length - 1} motions, got {motion_count}")

        output = JointOutput()
        if self.arch.has_depth:
            pyramids = [self.encoder(frames[:, t]) for t in range(length)]
            identity = torch.eye(3, dtype=frames.dtype, device=frames.device).expand(batch, 3, 3)
            still = frames.new_zeros(batch, 3)
            state = None
            for t in range(length):
                if t == 0:
                    rotation, translation, previous = identity, still, pyramids[0]
                else:
                    rotation = rotations[:, t - 1].to(frames.dtype)
                    translation = translations[:, t - 1].to(frames.dtype)
                    previous = pyramids[t - 1]
                decoded = self.depth_decoder(pyramids[t], previous, state, rotation, translation, intr)
                state = decoded.state()
            output.parallax_levels = decoded.parallax
            output.depth_levels = decoded.depth
            output.depth_mask_levels = decoded.depth_masks
            output.degenerate = decoded.degenerate
            output.parallax = upsample2(decoded.parallax[-1], 'nearest')
            output.depth = upsample2(decoded.depth[-1], 'nearest')
            output.depth_mask = upsample2(decoded.depth_masks[-1].to(frames.dtype), 'nearest') > 0.5
            current = pyramids[-1]
        else:
            current = self.encoder(frames[:, -1])

        if self.arch.has_semantic:
            semantic = self.semantic_decoder(current)
            output.seg_levels = semantic.logits
            output.seg_raw_levels = semantic.raw
            output.seg_logits = upsample2(semantic.logits[-1], 'nearest')
            output.seg_probs = F.softmax(output.seg_logits, dim=1)
        return output


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def frames_to_tensor(frames: Sequence[np.ndarray], dtype=torch.float32) -> torch.Tensor:
    """(n, H, W, 3) uint8 frames to a (1, n, 3, H, W) tensor in [0, 1]"""
    stacked = np.stack([np.asarray(f) for f in frames]).astype(np.float64) / 255.0
    return torch.as_tensor(stacked, dtype=dtype).permute(0, 3, 1, 2).unsqueeze(0)


def motions_to_tensors(motions: Sequence[MotionTransform], dtype=torch.float32):
    """(1, m, 3, 3) rotations and (1, m, 3) translations"""
    if not motions:
        return torch.zeros(1, 0, 3, 3, dtype=dtype), torch.zeros(1, 0, 3, dtype=dtype)
    rotations = torch.as_tensor(np.stack([m.rotation for m in motions]), dtype=dtype).unsqueeze(0)
    translations = torch.as_tensor(np.stack([m.translation for m in motions]), dtype=dtype).unsqueeze(0)
    return rotations, translations


def joint_forward(model: JointDepthSegNet, sequence: Sequence[np.ndarray], motions: Sequence[MotionTransform],
                  intr: CameraIntrinsics) -> JointOutput:
    """Run the model on one sequence of uint8 RGB frames (oldest first)"""
    if len(motions) != max(len(sequence) - 1, 0):
        raise ContractError(f"{len(sequence)} frames need {len(sequence) - 1} motions, got {len(motions)}")
    dtype = next(model.parameters()).dtype
    frames = frames_to_tensor(sequence, dtype)
    rotations, translations = motions_to_tensors(motions, dtype)
    return model(frames, rotations, translations, intr)
