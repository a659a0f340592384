"""Bag-of-patches wrapper around the whole-image classifier.

The image-level probability is the exact maximum of the per-patch
probabilities, so gradients flow only through argmax patches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..preprocess import PatchBag
from .classifier import PneumoClassifier


@dataclass
class BagScore:
    patch_scores: np.ndarray  # (n,) probabilities
    bag_score: float

    def __post_init__(self) -> None:
        assert self.bag_score == float(np.max(self.patch_scores))


def bag_to_tensor(bag: PatchBag) -> torch.Tensor:
    """Stack bag patches as a (n, 1, ps, ps) float tensor."""
    return torch.from_numpy(np.ascontiguousarray(bag.patches)).float().unsqueeze(1)


def mil_probs(
    model: PneumoClassifier, patches: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Differentiable patch probabilities and their max (the bag score)."""
    logits = model(patches).reshape(-1)
    probs = torch.sigmoid(logits)
    return probs, probs.max()


def mil_forward(model: PneumoClassifier, bag: PatchBag) -> BagScore:
    """Inference-mode bag scoring with patch-size validation."""
    expected = model.config.input_size
    if bag.patch_size != expected:
        raise ValueError(
            f"bag patch size {bag.patch_size} != model input size {expected}"
        )
    was_training = model.training
    model.eval()
    try:
        with torch.inference_mode():
            probs, bag_prob = mil_probs(model, bag_to_tensor(bag))
    finally:
        model.train(was_training)
    scores = probs.numpy().astype(np.float64)
    return BagScore(patch_scores=scores, bag_score=float(scores.max()))
