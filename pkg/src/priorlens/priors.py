"""Prior extraction from blurry inputs and the distillation losses.

The student trunk mirrors the teacher pyramid shapes. Cross-level fusion
pulls each deeper level into the one above it through a sigmoid attention
gate before distillation, and the hierarchical context loss compares
feature maps at pooling factors 1, 2, and 4.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from . import PYRAMID_CHANNELS, PYRAMID_LEVELS
from .nets import FeatureTrunk

POOL_FACTORS = (1, 2, 4)


class StudentNet(nn.Module):
    """Trainable prior extractor; pyramid shapes match the teacher's."""

    def __init__(self, channels: tuple[int, ...] = PYRAMID_CHANNELS):
        super().__init__()
        self.trunk = FeatureTrunk(channels)
        self.channels = tuple(channels)

    def forward(self, blurry: torch.Tensor) -> list[torch.Tensor]:
        return self.trunk(blurry)


class CrossLevelFusion(nn.Module):
    """Attention-gated fusion of each deeper level into the level above.

    For the two shallower levels: a = sigmoid(conv(cat(m_i, up(m_{i+1})))),
    fused_i = a * m_i + a * up(m_{i+1}). The deepest level passes through
    untouched. up() is bilinear 2x upsampling followed by a 1x1 channel
    projection so the addition is well-typed.
    """

    def __init__(self, channels: tuple[int, ...] = PYRAMID_CHANNELS):
        super().__init__()
        self.channels = tuple(channels)
        self.project = nn.ModuleList(
            nn.Conv2d(channels[i + 1], channels[i], 1) for i in range(len(channels) - 1)
        )
        self.attention = nn.ModuleList(
            nn.Conv2d(2 * channels[i], channels[i], 3, padding=1)
            for i in range(len(channels) - 1)
        )

    def forward(self, pyramid: list[torch.Tensor]) -> list[torch.Tensor]:
        _check_pyramid(pyramid, self.channels)
        fused = []
        for i in range(len(pyramid) - 1):
            up = F.interpolate(
                pyramid[i + 1], size=pyramid[i].shape[-2:], mode="bilinear",
                align_corners=False,
            )
            up = self.project[i](up)
            gate = torch.sigmoid(self.attention[i](torch.cat([pyramid[i], up], dim=1)))
            fused.append(gate * pyramid[i] + gate * up)
        fused.append(pyramid[-1])
        return fused


def _as_batched(t: torch.Tensor) -> torch.Tensor:
    if t.dim() == 3:
        return t.unsqueeze(0)
    if t.dim() == 4:
        return t
    raise ValueError(f"expected 3D or 4D feature map, got {t.dim()}D")


def _check_pyramid(pyramid, channels=None):
    if len(pyramid) != PYRAMID_LEVELS:
        raise ValueError(f"expected {PYRAMID_LEVELS} pyramid levels, got {len(pyramid)}")
    for i, level in enumerate(pyramid):
        if channels is not None and level.shape[-3] != channels[i]:
            raise ValueError(
                f"level {i}: expected {channels[i]} channels, got {level.shape[-3]}"
            )
        if i > 0:
            prev = pyramid[i - 1]
            if (prev.shape[-2] != 2 * level.shape[-2]) or (prev.shape[-1] != 2 * level.shape[-1]):
                raise ValueError(
                    f"level {i}: spatial dims {tuple(level.shape[-2:])} do not halve "
                    f"{tuple(prev.shape[-2:])}"
                )


def hierarchical_context_loss(
    a: torch.Tensor,
    b: torch.Tensor,
    pool_factors: tuple[int, ...] = POOL_FACTORS,
    squared: bool = False,
) -> torch.Tensor:
    """Multi-resolution pooled distance between two feature maps.

    Default form: sum over pooling factors of the Frobenius norm of the
    pooled difference, normalized once by the original spatial area.
    squared=True switches each term to a plain mean-squared error (no
    extra area normalization; the mean already supplies it). Pool factors
    exceeding the spatial extent are skipped so tiny maps stay usable.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    a, b = _as_batched(a), _as_batched(b)
    h, w = a.shape[-2:]
    per_sample = a.new_zeros(a.shape[0])
    for k in pool_factors:
        if k > min(h, w):
            continue
        pa = a if k == 1 else F.avg_pool2d(a, k)
        pb = b if k == 1 else F.avg_pool2d(b, k)
        diff = (pa - pb).flatten(1)
        if squared:
            per_sample = per_sample + diff.pow(2).mean(dim=1)
        else:
            per_sample = per_sample + torch.linalg.vector_norm(diff, dim=1)
    if not squared:
        per_sample = per_sample / (h * w)
    return per_sample.mean()


def prior_loss(
    f_pri: list[torch.Tensor],
    f_gt: list[torch.Tensor],
    pool_factors: tuple[int, ...] = POOL_FACTORS,
    squared: bool = False,
) -> torch.Tensor:
    """Mean hierarchical context loss over the three pyramid levels.

    The per-level area normalization lives inside the context loss and is
    applied exactly once.
    """
    _check_pyramid(f_pri)
    _check_pyramid(f_gt)
    terms = [
        hierarchical_context_loss(p, g, pool_factors=pool_factors, squared=squared)
        for p, g in zip(f_pri, f_gt)
    ]
    return torch.stack(terms).mean()


def plain_prior_loss(
    m: list[torch.Tensor],
    f_gt: list[torch.Tensor],
    pool_factors: tuple[int, ...] = POOL_FACTORS,
    squared: bool = False,
) -> torch.Tensor:
    """Distillation loss on the raw student pyramid (no cross-level fusion)."""
    return prior_loss(m, f_gt, pool_factors=pool_factors, squared=squared)
