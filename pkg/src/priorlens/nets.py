"""Shared convolutional building blocks for the pyramid networks."""

from __future__ import annotations

import torch
import torch.nn as nn

from . import PYRAMID_CHANNELS


def require_spatial_multiple(x: torch.Tensor, factor: int = 8) -> None:
    h, w = x.shape[-2:]
    if h % factor or w % factor:
        raise ValueError(f"spatial dims must be divisible by {factor}, got {h}x{w}")
    if h < factor or w < factor:
        raise ValueError(f"spatial dims must be at least {factor}, got {h}x{w}")


def conv_stage(in_ch: int, out_ch: int, stride: int = 2) -> nn.Sequential:
    """Stride-2 downsampling stage: halves resolution, two 3x3 convs."""
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(out_ch, out_ch, 3, padding=1),
        nn.ReLU(inplace=True),
    )


class FeatureTrunk(nn.Module):
    """Three-stage encoder tapping features at strides 2, 4, and 8.

    Output level i has channels[i] channels at 1/2^(i+1) of the input
    resolution; this shape contract is shared by the teacher and the
    prior extractor so their pyramids align without projections.
    """

    def __init__(self, channels: tuple[int, ...] = PYRAMID_CHANNELS, in_channels: int = 3):
        super().__init__()
        self.channels = tuple(channels)
        stages = []
        prev = in_channels
        for ch in self.channels:
            stages.append(conv_stage(prev, ch))
            prev = ch
        self.stages = nn.ModuleList(stages)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        require_spatial_multiple(x, 2 ** len(self.stages))
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats
