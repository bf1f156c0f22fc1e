from typing import List

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ShapeError
from .config import ArchConfig
from .layers import conv3x3, conv3x3_parameters, dinl


class PyramidEncoder(nn.Module):
    """
    Shared feature pyramid. Each level halves the resolution with a strided
    3x3 convolution followed by a second 3x3 convolution; the first level
    standardizes its features with DINL before activation.
    """

    def __init__(self, arch: ArchConfig, in_channels: int = 3):
        super().__init__()
        self.arch = arch
        self.levels = nn.ModuleList()
        previous = in_channels
        for channels in arch.filters_per_level:
            self.levels.append(nn.ModuleDict({
                'down': conv3x3(previous, channels, stride=2),
                'conv': conv3x3(channels, channels),
            }))
            previous = channels

    def check_input(self, frame: torch.Tensor):
        height, width = frame.shape[-2:]
        divisor = self.arch.divisor
        if height % divisor or width % divisor:
            raise ShapeError(f"Input {height}x{width} must be divisible by 2^{self.arch.num_levels} = {divisor}")

    def forward(self, frame: torch.Tensor) -> List[torch.Tensor]:
        """Feature pyramid, finest level first (level 1 at H/2)"""
        self.check_input(frame)
        slope = self.arch.leaky_slope
        pyramid = []
        x = frame
        for index, level in enumerate(self.levels):
            x = level['down'](x)
            if index == 0:
                x = dinl(x)
            x = F.leaky_relu(x, slope)
            x = F.leaky_relu(level['conv'](x), slope)
            pyramid.append(x)
        return pyramid


def analytic_encoder_parameter_count(arch: ArchConfig, in_channels: int = 3) -> int:
    total = 0
    previous = in_channels
    for channels in arch.filters_per_level:
        total += conv3x3_parameters(previous, channels) + conv3x3_parameters(channels, channels)
        previous = channels
    return total
