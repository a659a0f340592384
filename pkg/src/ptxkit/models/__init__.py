from .classifier import (
    CnnConfig,
    PneumoClassifier,
    build_cnn,
    count_parameters,
    load_backbone_weights,
    replace_head,
)
from .mil import BagScore, bag_to_tensor, mil_forward, mil_probs
from .segmenter import AttentionGate, AttentionUNet, FcnConfig, InstanceNorm, build_fcn
from .checkpoint import (
    FORMAT_VERSION,
    load_checkpoint,
    load_model,
    model_from_checkpoint,
    save_checkpoint,
)

__all__ = [
    "CnnConfig",
    "PneumoClassifier",
    "build_cnn",
    "count_parameters",
    "load_backbone_weights",
    "replace_head",
    "BagScore",
    "bag_to_tensor",
    "mil_forward",
    "mil_probs",
    "AttentionGate",
    "AttentionUNet",
    "FcnConfig",
    "InstanceNorm",
    "build_fcn",
    "FORMAT_VERSION",
    "load_checkpoint",
    "load_model",
    "model_from_checkpoint",
    "save_checkpoint",
]
