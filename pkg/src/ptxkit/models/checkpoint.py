"""Versioned checkpoint archives: architecture config + named weights.

The classifier state is stored identically for the whole-image and bag
methods, so those checkpoints interchange without key remapping.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Any

import torch
import torch.nn as nn

from .classifier import CnnConfig, PneumoClassifier
from .segmenter import AttentionUNet, FcnConfig

FORMAT_VERSION = 1


def save_checkpoint(
    path: str | Path,
    method: str,
    model: nn.Module,
    *,
    train_config: dict | None = None,
    extra: dict | None = None,
) -> None:
    """Atomic write: serialize to a temp file, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "method": method,
        "model_kind": _kind_of(model),
        "model_config": model.config.to_dict(),
        "state_dict": model.state_dict(),
        "train_config": train_config,
        "extra": extra or {},
    }
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            torch.save(payload, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _kind_of(model: nn.Module) -> str:
    if isinstance(model, PneumoClassifier):
        return "classifier"
    if isinstance(model, AttentionUNet):
        return "segmenter"
    raise TypeError(f"unsupported model type {type(model).__name__}")


def load_checkpoint(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint format version {version}")
    return payload


def model_from_checkpoint(payload: dict[str, Any]) -> nn.Module:
    """Rebuild the architecture from its stored config and load weights."""
    kind = payload["model_kind"]
    cfg = dict(payload["model_config"])
    if kind == "classifier":
        cfg.pop("pretrained", None)
        model = PneumoClassifier(CnnConfig(**cfg, pretrained=None))
    elif kind == "segmenter":
        model = AttentionUNet(FcnConfig(**cfg))
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model


def load_model(path: str | Path) -> nn.Module:
    return model_from_checkpoint(load_checkpoint(path))
