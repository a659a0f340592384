"""Whole-image binary classifier: ResNet-50 with a grayscale stem, an
extra stride-2 pool after the first bottleneck block (enabling the
enlarged 448 input while keeping the stock 7x7 final feature map), and a
single-logit head."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import torch
import torch.nn as nn

STAGE_BLOCKS = (3, 4, 6, 3)
STAGE_WIDTHS = (64, 128, 256, 512)
EXPANSION = 4


@dataclass
class CnnConfig:
    input_size: int = 448
    in_channels: int = 1
    extra_pool: bool = True
    # literal reading: pool right after the first bottleneck block of the
    # first stage; False places it after the whole first stage instead
    extra_pool_after_block: bool = True
    pretrained: str | None = None

    def __post_init__(self) -> None:
        stride_total = 64 if self.extra_pool else 32
        if self.input_size % stride_total:
            raise ValueError(
                f"input_size {self.input_size} not divisible by {stride_total}"
            )

    def to_dict(self) -> dict:
        return asdict(self)


class Bottleneck(nn.Module):
    def __init__(self, in_ch: int, mid_ch: int, stride: int = 1):
        super().__init__()
        out_ch = mid_ch * EXPANSION
        self.conv1 = nn.Conv2d(in_ch, mid_ch, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(mid_ch)
        self.conv2 = nn.Conv2d(mid_ch, mid_ch, 3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(mid_ch)
        self.conv3 = nn.Conv2d(mid_ch, out_ch, 1, bias=False)
        self.bn3 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or in_ch != out_ch:
            self.downsample = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )
        else:
            self.downsample = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        identity = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        return self.relu(out + identity)


def _make_stage(in_ch: int, mid_ch: int, blocks: int, stride: int) -> nn.Sequential:
    layers = [Bottleneck(in_ch, mid_ch, stride=stride)]
    for _ in range(blocks - 1):
        layers.append(Bottleneck(mid_ch * EXPANSION, mid_ch))
    return nn.Sequential(*layers)


class PneumoClassifier(nn.Module):
    """ResNet-50 topology emitting one logit per image."""

    def __init__(self, config: CnnConfig | None = None):
        super().__init__()
        self.config = config or CnnConfig()
        cfg = self.config
        self.conv1 = nn.Conv2d(cfg.in_channels, 64, 7, stride=2, padding=3, bias=False)
        self.bn1 = nn.BatchNorm2d(64)
        self.relu = nn.ReLU(inplace=True)
        self.maxpool = nn.MaxPool2d(3, stride=2, padding=1)
        self.stage1 = _make_stage(64, STAGE_WIDTHS[0], STAGE_BLOCKS[0], stride=1)
        self.stage2 = _make_stage(256, STAGE_WIDTHS[1], STAGE_BLOCKS[1], stride=2)
        self.stage3 = _make_stage(512, STAGE_WIDTHS[2], STAGE_BLOCKS[2], stride=2)
        self.stage4 = _make_stage(1024, STAGE_WIDTHS[3], STAGE_BLOCKS[3], stride=2)
        self.extra_pool = nn.MaxPool2d(2, stride=2) if cfg.extra_pool else None
        self.avgpool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(512 * EXPANSION, 1)

    def _stage1_with_pool(self, x: torch.Tensor) -> torch.Tensor:
        if self.extra_pool is None:
            return self.stage1(x)
        if self.config.extra_pool_after_block:
            x = self.stage1[0](x)
            x = self.extra_pool(x)
            for block in self.stage1[1:]:
                x = block(x)
            return x
        return self.extra_pool(self.stage1(x))

    def backbone_features(self, x: torch.Tensor) -> torch.Tensor:
        """Pooled features right before the classification head."""
        x = self.maxpool(self.relu(self.bn1(self.conv1(x))))
        x = self._stage1_with_pool(x)
        x = self.stage2(x)
        x = self.stage3(x)
        x = self.stage4(x)
        return torch.flatten(self.avgpool(x), 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc(self.backbone_features(x))

    def predict_proba(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.forward(x))


def build_cnn(config: CnnConfig | None = None) -> PneumoClassifier:
    model = PneumoClassifier(config)
    if model.config.pretrained:
        payload = torch.load(model.config.pretrained, map_location="cpu", weights_only=False)
        state = payload.get("state_dict", payload) if isinstance(payload, dict) else payload
        load_backbone_weights(model, state)
    return model


def replace_head(model: PneumoClassifier, out_classes: int = 1) -> PneumoClassifier:
    """Swap in a fresh randomly initialized dense head; backbone untouched."""
    in_features = model.fc.in_features
    model.fc = nn.Linear(in_features, out_classes)
    return model


def load_backbone_weights(model: PneumoClassifier, state: dict) -> None:
    """Load weights, adapting a 3-channel stem and skipping a foreign head.

    A 3-channel first conv is collapsed to 1 channel by summing kernels
    over the input dimension, which preserves the response to grayscale
    inputs replicated across channels. A head whose shape disagrees is
    left at its fresh initialization.
    """
    state = dict(state)
    own = model.state_dict()
    src = state.get("conv1.weight")
    if src is not None and src.shape[1] == 3 and own["conv1.weight"].shape[1] == 1:
        state["conv1.weight"] = src.sum(dim=1, keepdim=True)
    for key in ("fc.weight", "fc.bias"):
        if key in state and key in own and state[key].shape != own[key].shape:
            del state[key]
    missing, unexpected = model.load_state_dict(state, strict=False)
    missing = [k for k in missing if not k.startswith("fc.")]
    if missing or unexpected:
        raise ValueError(
            f"checkpoint incompatible with classifier: missing={missing} "
            f"unexpected={unexpected}"
        )


def count_parameters(model: nn.Module) -> int:
    """Number of trainable scalars."""
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
