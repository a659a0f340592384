"""Pixel-probability segmenter: four-level U-Net with additive attention
gates on the skip connections and per-instance normalization after every
convolution (harmonizes contrast across heterogeneous radiographs)."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class FcnConfig:
    levels: int = 4
    base_width: int = 16
    in_channels: int = 1
    attention_gates: bool = True

    def widths(self) -> list[int]:
        return [self.base_width * (2**i) for i in range(self.levels + 1)]

    def to_dict(self) -> dict:
        return asdict(self)


class InstanceNorm(nn.Module):
    """Per-sample, per-channel spatial normalization with learned affine."""

    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))

    def normalize(self, x: torch.Tensor) -> torch.Tensor:
        mean = x.mean(dim=(2, 3), keepdim=True)
        var = x.var(dim=(2, 3), unbiased=False, keepdim=True)
        return (x - mean) / torch.sqrt(var + self.eps)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.normalize(x)
        return out * self.weight[None, :, None, None] + self.bias[None, :, None, None]


class ConvBlock(nn.Module):
    """Two 3x3 conv -> instance norm -> ReLU stages."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.norm1 = InstanceNorm(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.norm2 = InstanceNorm(out_ch)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.relu(self.norm1(self.conv1(x)))
        return F.relu(self.norm2(self.conv2(x)))


class AttentionGate(nn.Module):
    """Additive attention over a skip connection.

    The skip is projected (stride 2) to the gating resolution, summed with
    the projected gating signal, squashed to a scalar coefficient map,
    upsampled back, and multiplied onto the skip. Coefficients live in
    (0, 1), so the gated skip never exceeds the input in magnitude.
    """

    def __init__(self, skip_ch: int, gate_ch: int, inter_ch: int | None = None):
        super().__init__()
        inter_ch = inter_ch or max(skip_ch // 2, 1)
        self.project_gate = nn.Conv2d(gate_ch, inter_ch, 1)
        self.project_skip = nn.Conv2d(skip_ch, inter_ch, 1, stride=2)
        self.to_coefficient = nn.Conv2d(inter_ch, 1, 1)

    def coefficients(self, skip: torch.Tensor, gate: torch.Tensor) -> torch.Tensor:
        g = self.project_gate(gate)
        s = self.project_skip(skip)
        if g.shape[-2:] != s.shape[-2:]:
            raise ValueError(
                f"gate spatial size {tuple(gate.shape[-2:])} is not one level "
                f"coarser than skip {tuple(skip.shape[-2:])}"
            )
        a = torch.sigmoid(self.to_coefficient(F.relu(g + s)))
        return F.interpolate(a, size=skip.shape[-2:], mode="bilinear", align_corners=False)

    def forward(self, skip: torch.Tensor, gate: torch.Tensor) -> torch.Tensor:
        return skip * self.coefficients(skip, gate)


class AttentionUNet(nn.Module):
    """Encoder/decoder with gated skips; sigmoid probability map output."""

    def __init__(self, config: FcnConfig | None = None):
        super().__init__()
        self.config = config or FcnConfig()
        cfg = self.config
        w = cfg.widths()  # e.g. [16, 32, 64, 128, 256]

        self.encoders = nn.ModuleList(
            [
                ConvBlock(cfg.in_channels if i == 0 else w[i - 1], w[i])
                for i in range(cfg.levels)
            ]
        )
        self.bottleneck = ConvBlock(w[cfg.levels - 1], w[cfg.levels])
        self.upsamplers = nn.ModuleList(
            [nn.ConvTranspose2d(w[i + 1], w[i], 2, stride=2) for i in range(cfg.levels)]
        )
        self.decoders = nn.ModuleList(
            [ConvBlock(w[i] * 2, w[i]) for i in range(cfg.levels)]
        )
        if cfg.attention_gates:
            self.gates = nn.ModuleList(
                [AttentionGate(w[i], w[i + 1]) for i in range(cfg.levels)]
            )
        else:
            self.gates = None
        self.head = nn.Conv2d(w[0], 1, 1)
        # zero biases: zero activations stay zero through padding borders,
        # so degenerate inputs map to flat probability maps
        for module in self.modules():
            if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)) and module.bias is not None:
                nn.init.zeros_(module.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        factor = 2**self.config.levels
        h, w = x.shape[-2:]
        if h % factor or w % factor:
            raise ValueError(f"input sides {(h, w)} must be divisible by {factor}")

        skips = []
        for enc in self.encoders:
            x = enc(x)
            skips.append(x)
            x = F.max_pool2d(x, 2)
        x = self.bottleneck(x)
        for i in range(self.config.levels - 1, -1, -1):
            skip = skips[i]
            if self.gates is not None:
                skip = self.gates[i](skip, x)
            x = self.upsamplers[i](x)
            x = self.decoders[i](torch.cat([skip, x], dim=1))
        return torch.sigmoid(self.head(x))


def build_fcn(config: FcnConfig | None = None) -> AttentionUNet:
    return AttentionUNet(config)
