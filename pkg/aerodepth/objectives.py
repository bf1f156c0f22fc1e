"""
Training losses: multi-level log-L1 depth loss, multi-level cross-entropy
semantic loss, and their weighted sum.

Per-level lists are ordered coarsest first; level m (1 = coarsest) of the
depth loss carries weight 2^(m+1).
"""
import csv
import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F

from .errors import ContractError

logger = logging.getLogger(__name__)

DEFAULT_LOSS_WEIGHT = 0.15
LOSS_LOG_HEADER = ['step', 'depth', 'semantic', 'total', 'w']


@dataclass
class LossBreakdown:
    depth_loss: torch.Tensor
    semantic_loss: torch.Tensor
    total: torch.Tensor
    per_level: List[Tuple[float, float]] = field(default_factory=list)
    loss_weight: float = DEFAULT_LOSS_WEIGHT

    def as_row(self, step: int) -> List:
        return [step, float(self.depth_loss), float(self.semantic_loss), float(self.total), self.loss_weight]


def _downscale_nearest(target: torch.Tensor, height: int, width: int) -> torch.Tensor:
    """Nearest-neighbor subsampling of a (B, H, W) map to (B, height, width)"""
    full_height, full_width = target.shape[-2:]
    if full_height % height or full_width % width or full_height // height != full_width // width:
        raise ContractError(f"Cannot downscale a {full_height}x{full_width} map to {height}x{width}")
    factor = full_height // height
    return target[..., ::factor, ::factor]


def _as_maps(tensor: torch.Tensor) -> torch.Tensor:
    return tensor[:, 0] if tensor.ndim == 4 else tensor


def depth_loss(per_level_depth_preds: Sequence[torch.Tensor], gt_depth: torch.Tensor,
               include_sky: bool = True, max_depth: Optional[float] = None):
    """
    Sum over levels of 2^(m+1) * mean |log d - log d_hat| over valid pixels.

    Args:
        per_level_depth_preds: (B, 1, h, w) predictions, coarsest first
        gt_depth: (B, 1, H, W) or (B, H, W) ground truth, H a multiple of every h
        include_sky: when False, pixels whose ground truth is at max_depth are excluded
        max_depth: sky depth, required when include_sky is False

    Returns:
        (total, per-level terms)
    """
    gt = _as_maps(gt_depth)
    if bool((gt <= 0).any()):
        raise ContractError("Ground-truth depth must be positive")
    if not include_sky and max_depth is None:
        raise ContractError("max_depth is required to exclude sky pixels")

    terms = []
    total = gt.new_zeros(())
    for m, prediction in enumerate(per_level_depth_preds, start=1):
        prediction = _as_maps(prediction)
        if bool((prediction <= 0).any()):
            raise ContractError(f"Predicted depth at level {m} must be positive")
        target = _downscale_nearest(gt, *prediction.shape[-2:])
        difference = torch.abs(torch.log(target.to(prediction.dtype)) - torch.log(prediction))
        if include_sky:
            term = difference.mean()
        else:
            valid = target < max_depth
            count = valid.sum()
            term = (difference * valid).sum() / count.clamp(min=1)
        term = (2.0 ** (m + 1)) * term
        terms.append(term)
        total = total + term
    return total, terms


def semantic_loss(per_level_logits: Sequence[torch.Tensor], gt_classes: torch.Tensor):
    """
    Sum over levels of the mean categorical cross-entropy.

    Args:
        per_level_logits: (B, N_c, h, w) logits, coarsest first
        gt_classes: (B, H, W) class indices, downscaled per level by nearest neighbor

    Returns:
        (total, per-level terms)
    """
    gt = gt_classes.long()
    if gt.ndim == 4:
        gt = gt[:, 0]
    num_classes = per_level_logits[0].shape[1]
    if bool((gt < 0).any()) or bool((gt >= num_classes).any()):
        raise ContractError(f"Class indices must lie in [0, {num_classes})")

    terms = []
    total = None
    for logits in per_level_logits:
        target = _downscale_nearest(gt, *logits.shape[-2:])
        term = F.cross_entropy(logits, target, reduction='mean')
        terms.append(term)
        total = term if total is None else total + term
    return total, terms


def joint_loss(depth_terms, semantic_terms, w: float = DEFAULT_LOSS_WEIGHT) -> LossBreakdown:
    """
    total = depth + w * semantic. Either side may be None for single-task models.

    Args:
        depth_terms: (total, per-level) from depth_loss, or None
        semantic_terms: (total, per-level) from semantic_loss, or None
    """
    if depth_terms is None and semantic_terms is None:
        raise ContractError("At least one loss must be provided")
    reference = (depth_terms or semantic_terms)[0]
    zero = reference.new_zeros(())
    depth_total, depth_levels = depth_terms if depth_terms is not None else (zero, [])
    semantic_total, semantic_levels = semantic_terms if semantic_terms is not None else (zero, [])
    total = depth_total + w * semantic_total

    levels = max(len(depth_levels), len(semantic_levels))
    per_level = []
    for index in range(levels):
        d = float(depth_levels[index]) if index < len(depth_levels) else 0.0
        s = float(semantic_levels[index]) if index < len(semantic_levels) else 0.0
        per_level.append((d, s))
    return LossBreakdown(depth_total, semantic_total, total, per_level, float(w))


class LossLogger:
    """
    Append one CSV row per optimizer step. Extra columns go between `step`
    and the losses (`leading`) or after the weight (`trailing`).
    """

    def __init__(self, path: str, leading: Sequence[str] = (), trailing: Sequence[str] = ()):
        self.path = path
        self.header = [LOSS_LOG_HEADER[0], *leading, *LOSS_LOG_HEADER[1:], *trailing]
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self._handle = open(path, 'w', newline='')
        self._writer = csv.writer(self._handle)
        self._writer.writerow(self.header)

    def log(self, step: int, breakdown: LossBreakdown, leading: Sequence = (), trailing: Sequence = ()):
        row = breakdown.as_row(step)
        self._writer.writerow([row[0], *leading, *row[1:], *trailing])
        self._handle.flush()

    def close(self):
        if not self._handle.closed:
            self._handle.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
        return False
