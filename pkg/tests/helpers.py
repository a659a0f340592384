"""Shared test utilities: finite-difference gradient comparison and a
small patch net for bag-contract tests that don't need the full backbone."""

import numpy as np
import torch
import torch.nn as nn

from ptxkit.training import finite_difference_grad


def autograd_vs_fd(fn, x: torch.Tensor, h: float = 1e-4) -> float:
    """Global relative error between autograd and central differences."""
    x = x.detach().clone().double().requires_grad_(True)
    out = fn(x)
    out.backward()
    analytic = x.grad.detach()
    numeric = finite_difference_grad(lambda t: fn(t).item(), x, h=h)
    denom = numeric.abs().max().item()
    return (analytic - numeric).abs().max().item() / max(denom, 1e-12)


class Namespace:
    def __init__(self, **kw):
        self.__dict__.update(kw)


class TinyPatchNet(nn.Module):
    """Lightweight stand-in classifier honoring the model.config protocol."""

    def __init__(self, input_size: int = 32, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.config = Namespace(input_size=input_size)
        self.conv1 = nn.Conv2d(1, 4, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(4, 8, 3, stride=2, padding=1)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(8, 1)

    def forward(self, x):
        x = torch.relu(self.conv1(x))
        x = torch.relu(self.conv2(x))
        return self.fc(torch.flatten(self.pool(x), 1))


def random_bag(rng: np.random.Generator, patch_size: int = 32):
    from ptxkit.preprocess import make_bag

    side = int(rng.integers(48, 200))
    return make_bag(rng.random((side, side)).astype(np.float32), patch_size=patch_size)
