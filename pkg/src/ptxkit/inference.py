"""Scoring trained models on full images (no augmentation)."""

from __future__ import annotations

import numpy as np
import torch

from .models.classifier import PneumoClassifier
from .models.mil import BagScore, bag_to_tensor, mil_probs
from .models.segmenter import AttentionUNet
from .preprocess import five_crop, make_bag, resize, resize_side_for, standard_input


def _to_batch(arrays: list[np.ndarray]) -> torch.Tensor:
    return torch.from_numpy(np.stack(arrays)).float().unsqueeze(1)


def cnn_scores(
    model: PneumoClassifier,
    images: list[np.ndarray],
    *,
    five_crop_avg: bool = True,
    batch_size: int = 16,
) -> np.ndarray:
    """Image-level probabilities, optionally averaged over the five crops."""
    size = model.config.input_size
    inputs: list[np.ndarray] = []
    per_image = 1
    if five_crop_avg:
        per_image = 5
        for img in images:
            resized = resize(img, resize_side_for(size))
            inputs.extend(np.ascontiguousarray(c) for c in five_crop(resized, size))
    else:
        inputs.extend(standard_input(img, size) for img in images)

    model.eval()
    probs: list[np.ndarray] = []
    with torch.inference_mode():
        for start in range(0, len(inputs), batch_size):
            batch = _to_batch(inputs[start : start + batch_size])
            probs.append(torch.sigmoid(model(batch).reshape(-1)).numpy())
    flat = np.concatenate(probs) if probs else np.zeros(0)
    return flat.reshape(len(images), per_image).mean(axis=1)


def mil_bag_scores(
    model: PneumoClassifier, images: list[np.ndarray]
) -> list[BagScore]:
    """Bag scores for whole images (exact max over patch probabilities)."""
    size = model.config.input_size
    model.eval()
    out: list[BagScore] = []
    with torch.inference_mode():
        for img in images:
            bag = make_bag(img, patch_size=size)
            probs, _ = mil_probs(model, bag_to_tensor(bag))
            scores = probs.numpy().astype(np.float64)
            out.append(BagScore(patch_scores=scores, bag_score=float(scores.max())))
    return out


def fcn_prob_maps(
    model: AttentionUNet,
    images: list[np.ndarray],
    input_size: int,
    *,
    batch_size: int = 16,
) -> np.ndarray:
    """Per-pixel probabilities at the model input resolution, (n, s, s)."""
    inputs = [resize(img, input_size) for img in images]
    model.eval()
    maps: list[np.ndarray] = []
    with torch.inference_mode():
        for start in range(0, len(inputs), batch_size):
            batch = _to_batch(inputs[start : start + batch_size])
            maps.append(model(batch).squeeze(1).numpy())
    return np.concatenate(maps) if maps else np.zeros((0, input_size, input_size))
