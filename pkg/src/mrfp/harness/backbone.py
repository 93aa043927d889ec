"""Small encoder-decoder segmentation network with named hook points.

Layout mirrors a DeepLabV3+-style model at toy scale: four encoder stages
(stride 2 each by default), a decoder that fuses the last stage with stage-0 features, a named
penultimate block and a 1x1 classification head.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
import torch.nn.functional as F

STAGE0_HOOK = "encoder.stage0"
PENULTIMATE_HOOK = "decoder.penultimate"


@dataclass(frozen=True)
class BackboneSpec:
    widths: tuple[int, ...] = (16, 32, 64, 64)
    decoder_width: int = 32
    num_classes: int = 5
    in_channels: int = 3
    hook_names: tuple[str, str] = (STAGE0_HOOK, PENULTIMATE_HOOK)
    strides: tuple[int, ...] = (2, 2, 2, 2)

    def __post_init__(self):
        if len(self.widths) != 4 or len(self.strides) != 4:
            raise ValueError("the backbone has exactly four encoder stages")
        if min(self.strides) < 1:
            raise ValueError("strides must be positive")
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        if min(self.widths) < 1 or self.decoder_width < 1 or self.num_classes < 2:
            raise ValueError("widths must be positive and num_classes >= 2")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))


def conv_bn_relu(cin, cout, stride=1, kernel=3):
    return nn.Sequential(
        nn.Conv2d(cin, cout, kernel, stride=stride, padding=kernel // 2, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=False),
    )


class EncoderStage(nn.Module):
    """Strided conv block followed by an (initially empty) normalization slot."""

    def __init__(self, cin, cout, stride=2):
        super().__init__()
        self.body = nn.Sequential(conv_bn_relu(cin, cout, stride=stride), conv_bn_relu(cout, cout))
        self.inorm = nn.Identity()

    def forward(self, x):
        return self.inorm(self.body(x))


class Encoder(nn.Module):
    def __init__(self, in_channels, widths, strides=(2, 2, 2, 2)):
        super().__init__()
        chans = (in_channels, *widths)
        for i in range(len(widths)):
            self.add_module(f"stage{i}", EncoderStage(chans[i], chans[i + 1], strides[i]))
        self.num_stages = len(widths)

    def forward(self, x):
        feats = []
        for i in range(self.num_stages):
            x = getattr(self, f"stage{i}")(x)
            feats.append(x)
        return feats


class Decoder(nn.Module):
    def __init__(self, widths, width):
        super().__init__()
        self.context = conv_bn_relu(widths[-1], width)
        self.reduce_low = conv_bn_relu(widths[0], width // 2, kernel=1)
        self.fuse = conv_bn_relu(width + width // 2, width)
        self.penultimate = conv_bn_relu(width, width)

    def forward(self, feats):
        low, high = feats[0], feats[-1]
        high = self.context(high)
        high = F.interpolate(high, size=low.shape[-2:], mode="bilinear", align_corners=False)
        x = self.fuse(torch.cat([high, self.reduce_low(low)], dim=1))
        return self.penultimate(x)


class SegBackbone(nn.Module):
    def __init__(self, spec: BackboneSpec | None = None, seed: int | None = None):
        super().__init__()
        self.spec = spec = spec or BackboneSpec()
        if seed is not None:
            torch.manual_seed(seed)
        self.encoder = Encoder(spec.in_channels, spec.widths, spec.strides)
        self.decoder = Decoder(spec.widths, spec.decoder_width)
        self.head = nn.Conv2d(spec.decoder_width, spec.num_classes, 1)

    @property
    def hook_channels(self) -> dict[str, int]:
        return {STAGE0_HOOK: self.spec.widths[0], PENULTIMATE_HOOK: self.spec.decoder_width}

    def encode(self, x) -> list[torch.Tensor]:
        return self.encoder(x)

    def forward(self, x):
        feats = self.encoder(x)
        logits = self.head(self.decoder(feats))
        return F.interpolate(logits, size=x.shape[-2:], mode="bilinear", align_corners=False)


def add_instance_norms(backbone: SegBackbone, stages=(0, 1, 2)) -> list[nn.InstanceNorm2d]:
    """Install affine instance norms at the end of the given encoder stages, in place."""
    added = []
    for i in stages:
        stage = getattr(backbone.encoder, f"stage{i}")
        if isinstance(stage.inorm, nn.InstanceNorm2d):
            added.append(stage.inorm)
            continue
        ref = next(stage.body.parameters())
        norm = nn.InstanceNorm2d(backbone.spec.widths[i], affine=True).to(ref)
        stage.inorm = norm
        added.append(norm)
    return added


def count_trainable(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)
