"""Denoiser architectures: U-Net and FPN decoders over ResNet encoders.

All models map a single-channel nanoscopy image to a single-channel
prediction. The output head applies ReLU followed by per-image max
normalization, so every nonzero prediction has maximum exactly 1.
"""

from __future__ import annotations

import enum

import torch
import torch.nn as nn
import torch.nn.functional as F
from torchvision.models import resnet34, resnet50

__all__ = ["Architecture", "build_model", "normalize_head"]

STRIDE = 32  # total encoder downsampling; inputs must divide evenly


class Architecture(enum.Enum):
    UNET_R34 = "unet_r34"
    UNET_R50 = "unet_r50"
    FPN_R34 = "fpn_r34"


def normalize_head(x: torch.Tensor) -> torch.Tensor:
    """ReLU then per-image max normalization (zero images pass through)."""
    x = F.relu(x)
    peak = x.amax(dim=(1, 2, 3), keepdim=True)
    return x / torch.clamp(peak, min=torch.finfo(x.dtype).tiny)


class _Encoder(nn.Module):
    """ResNet feature pyramid: strides 2, 4, 8, 16, 32."""

    def __init__(self, backbone):
        super().__init__()
        self.stem = nn.Sequential(backbone.conv1, backbone.bn1, backbone.relu)
        self.pool = backbone.maxpool
        self.layer1 = backbone.layer1
        self.layer2 = backbone.layer2
        self.layer3 = backbone.layer3
        self.layer4 = backbone.layer4

    def forward(self, x):
        c1 = self.stem(x)  # /2
        c2 = self.layer1(self.pool(c1))  # /4
        c3 = self.layer2(c2)  # /8
        c4 = self.layer3(c3)  # /16
        c5 = self.layer4(c4)  # /32
        return c1, c2, c3, c4, c5


def _conv_block(in_ch: int, out_ch: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, 3, padding=1, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
        nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class UNet(nn.Module):
    def __init__(self, backbone, encoder_channels):
        super().__init__()
        self.encoder = _Encoder(backbone)
        c1, c2, c3, c4, c5 = encoder_channels
        widths = (256, 128, 64, 32, 16)
        self.up4 = _conv_block(c5 + c4, widths[0])
        self.up3 = _conv_block(widths[0] + c3, widths[1])
        self.up2 = _conv_block(widths[1] + c2, widths[2])
        self.up1 = _conv_block(widths[2] + c1, widths[3])
        self.up0 = _conv_block(widths[3], widths[4])
        self.out = nn.Conv2d(widths[4], 1, 1)
        # positive bias keeps the ReLU head alive at initialization
        nn.init.constant_(self.out.bias, 0.1)

    @staticmethod
    def _up_cat(x, skip):
        x = F.interpolate(x, size=skip.shape[-2:], mode="nearest")
        return torch.cat([x, skip], dim=1)

    def forward(self, x):
        c1, c2, c3, c4, c5 = self.encoder(x.expand(-1, 3, -1, -1))
        d = self.up4(self._up_cat(c5, c4))
        d = self.up3(self._up_cat(d, c3))
        d = self.up2(self._up_cat(d, c2))
        d = self.up1(self._up_cat(d, c1))
        d = self.up0(F.interpolate(d, scale_factor=2, mode="nearest"))
        return normalize_head(self.out(d))


class FPN(nn.Module):
    def __init__(self, backbone, encoder_channels, width: int = 64):
        super().__init__()
        self.encoder = _Encoder(backbone)
        _, c2, c3, c4, c5 = encoder_channels
        self.lateral = nn.ModuleList(
            [nn.Conv2d(c, width, 1) for c in (c2, c3, c4, c5)]
        )
        self.smooth = nn.ModuleList(
            [nn.Conv2d(width, width, 3, padding=1) for _ in range(4)]
        )
        self.fuse = _conv_block(4 * width, width)
        self.out = nn.Conv2d(width, 1, 1)
        nn.init.constant_(self.out.bias, 0.1)

    def forward(self, x):
        _, c2, c3, c4, c5 = self.encoder(x.expand(-1, 3, -1, -1))
        feats = [lat(c) for lat, c in zip(self.lateral, (c2, c3, c4, c5))]
        # top-down pathway
        for i in range(2, -1, -1):
            feats[i] = feats[i] + F.interpolate(
                feats[i + 1], size=feats[i].shape[-2:], mode="nearest"
            )
        feats = [s(f) for s, f in zip(self.smooth, feats)]
        size = feats[0].shape[-2:]  # 1/4 resolution
        merged = torch.cat(
            [F.interpolate(f, size=size, mode="nearest") for f in feats], dim=1
        )
        d = self.fuse(merged)
        d = F.interpolate(d, scale_factor=4, mode="bilinear", align_corners=False)
        return normalize_head(self.out(d))


def build_model(architecture: Architecture, seed: int = 0) -> nn.Module:
    """Construct a model with deterministic (seeded) random initialization."""
    torch.manual_seed(seed)
    if architecture is Architecture.UNET_R34:
        return UNet(resnet34(weights=None), (64, 64, 128, 256, 512))
    if architecture is Architecture.UNET_R50:
        return UNet(resnet50(weights=None), (64, 256, 512, 1024, 2048))
    if architecture is Architecture.FPN_R34:
        return FPN(resnet34(weights=None), (64, 64, 128, 256, 512))
    raise ValueError(f"unknown architecture {architecture}")
