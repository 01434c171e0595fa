"""UNet restorer modulated by semantic priors.

The encoder/decoder levels sit at the same strides as the prior pyramid,
so level i priors align spatially with level i skip connections. Priors
enter each decoder level through one of four embedding modes: scale-shift
modulation, plain addition, concatenation, or none (plain skips).
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from . import PYRAMID_CHANNELS
from .nets import conv_stage, require_spatial_multiple

EMBEDDING_MODES = ("sat", "add", "concat", "none")


def _resize_like(x: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
    if x.shape[-2:] == ref.shape[-2:]:
        return x
    return F.interpolate(x, size=ref.shape[-2:], mode="bilinear", align_corners=False)


class MultiLevelAggregator(nn.Module):
    """Residual attention fusion of all pyramid levels into one level.

    M_i = conv(cat(level_i, resized others)) * level_i + level_i. The gate
    conv is linear so zeroed weights reduce the module to identity.
    """

    def __init__(self, channels: tuple[int, ...] = PYRAMID_CHANNELS):
        super().__init__()
        self.channels = tuple(channels)
        total = sum(channels)
        self.fuse = nn.ModuleList(
            nn.Conv2d(total, ch, 3, padding=1) for ch in channels
        )

    def forward(self, pyramid: list[torch.Tensor], level: int) -> torch.Tensor:
        if not 0 <= level < len(self.channels):
            raise ValueError(f"level must be in [0, {len(self.channels)}), got {level}")
        anchor = pyramid[level]
        parts = [anchor] + [
            _resize_like(pyramid[t], anchor)
            for t in range(len(pyramid))
            if t != level
        ]
        gate = self.fuse[level](torch.cat(parts, dim=1))
        return gate * anchor + anchor

    def aggregate(self, pyramid: list[torch.Tensor]) -> list[torch.Tensor]:
        return [self.forward(pyramid, i) for i in range(len(pyramid))]


class ScaleShiftModulator(nn.Module):
    """Prior-conditioned modulation of the summed skip features.

    Two convs turn the aggregated prior into a scale and a shift map;
    output = scale * (decoder + encoder) + shift.
    """

    def __init__(self, prior_channels: int, feature_channels: int):
        super().__init__()
        self.scale_conv = nn.Conv2d(prior_channels, feature_channels, 3, padding=1)
        self.shift_conv = nn.Conv2d(prior_channels, feature_channels, 3, padding=1)

    def forward(
        self, prior: torch.Tensor, f_en: torch.Tensor, f_de: torch.Tensor
    ) -> torch.Tensor:
        if f_en.shape != f_de.shape:
            raise ValueError(
                f"encoder/decoder shape mismatch: {tuple(f_en.shape)} vs {tuple(f_de.shape)}"
            )
        prior = _resize_like(prior, f_de)
        scale = self.scale_conv(prior)
        shift = self.shift_conv(prior)
        return scale * (f_de + f_en) + shift


def _upsample_block(in_ch: int, out_ch: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False),
        nn.Conv2d(in_ch, out_ch, 3, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(out_ch, out_ch, 3, padding=1),
        nn.ReLU(inplace=True),
    )


class DeblurNet(nn.Module):
    """Residual 3-level UNet; decoder levels are prior-modulated.

    Outputs are left unclamped so losses see raw values; callers clamp for
    metrics and file output.
    """

    def __init__(
        self,
        embedding: str = "sat",
        use_mla: bool = True,
        channels: tuple[int, ...] = PYRAMID_CHANNELS,
    ):
        super().__init__()
        if embedding not in EMBEDDING_MODES:
            raise ValueError(f"embedding must be one of {EMBEDDING_MODES}, got {embedding!r}")
        self.embedding = embedding
        self.use_mla = use_mla and embedding != "none"
        self.channels = tuple(channels)
        c1, c2, c3 = channels

        self.enc1 = conv_stage(3, c1)
        self.enc2 = conv_stage(c1, c2)
        self.enc3 = conv_stage(c2, c3)
        self.bottleneck = nn.Sequential(
            nn.Conv2d(c3, c3, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(c3, c3, 3, padding=1),
            nn.ReLU(inplace=True),
        )
        self.dec2 = _upsample_block(c3, c2)
        self.dec1 = _upsample_block(c2, c1)
        self.head = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False),
            nn.Conv2d(c1, c1, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(c1, 3, 3, padding=1),
        )

        if self.use_mla:
            self.aggregator = MultiLevelAggregator(channels)
        if embedding == "sat":
            self.modulators = nn.ModuleList(
                ScaleShiftModulator(ch, ch) for ch in channels
            )
        elif embedding == "concat":
            self.concat_proj = nn.ModuleList(
                nn.Conv2d(2 * ch, ch, 1) for ch in channels
            )

    def _merge(self, level: int, f_en, f_de, prior):
        if self.embedding == "none":
            return f_de + f_en
        if self.embedding == "sat":
            return self.modulators[level](prior, f_en, f_de)
        prior = _resize_like(prior, f_de)
        if self.embedding == "add":
            if prior.shape[1] != f_de.shape[1]:
                raise ValueError(
                    f"add embedding needs matching channels, got {prior.shape[1]} "
                    f"vs {f_de.shape[1]}"
                )
            return f_de + f_en + prior
        return self.concat_proj[level](torch.cat([f_de + f_en, prior], dim=1))

    def forward(
        self, blurry: torch.Tensor, priors: list[torch.Tensor] | None = None
    ) -> torch.Tensor:
        require_spatial_multiple(blurry, 8)
        if self.embedding != "none" and priors is None:
            raise ValueError(f"embedding mode {self.embedding!r} requires priors")

        merged = None
        if priors is not None and self.embedding != "none":
            merged = self.aggregator.aggregate(priors) if self.use_mla else list(priors)

        e1 = self.enc1(blurry)
        e2 = self.enc2(e1)
        e3 = self.enc3(e2)
        d3 = self.bottleneck(e3)
        s3 = self._merge(2, e3, d3, merged[2] if merged else None)
        d2 = self.dec2(s3)
        s2 = self._merge(1, e2, d2, merged[1] if merged else None)
        d1 = self.dec1(s2)
        s1 = self._merge(0, e1, d1, merged[0] if merged else None)
        return blurry + self.head(s1)
