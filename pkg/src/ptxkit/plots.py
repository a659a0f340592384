"""Static figure rendering: ROC overlays, patch-frame and heatmap overlays.

Everything writes files; there is no interactive display path.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Rectangle

from .evaluation import RocCurve

MIN_FRAME_WIDTH = 0.6
MAX_FRAME_WIDTH = 6.0


def save_roc_figure(
    curves: dict[str, RocCurve],
    path: str | Path,
    aucs: dict[str, float] | None = None,
) -> None:
    """One figure overlaying the given ROC curves (plus the chance line)."""
    if not curves:
        raise ValueError("no curves to plot")
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    for name, curve in curves.items():
        label = name
        if aucs and name in aucs:
            label = f"{name} (AUC {aucs[name]:.3f})"
        ax.plot(curve.fpr, curve.tpr, label=label, linewidth=1.6)
    ax.plot([0, 1], [0, 1], linestyle=":", color="gray", linewidth=1.0)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.legend(loc="lower right", fontsize=9)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def frame_linewidths(patch_scores: np.ndarray) -> np.ndarray:
    """Stroke widths proportional to patch scores (monotone, bounded)."""
    scores = np.clip(np.asarray(patch_scores, dtype=np.float64), 0.0, 1.0)
    return MIN_FRAME_WIDTH + (MAX_FRAME_WIDTH - MIN_FRAME_WIDTH) * scores


def render_patch_frames(
    frame_image: np.ndarray,
    origins: list[tuple[int, int]],
    patch_size: int,
    patch_scores: np.ndarray,
    path: str | Path | None = None,
):
    """Draw the bag grid over the image, thicker frames for higher scores.

    Returns the figure (also saved when a path is given) so callers can
    inspect the drawn rectangles.
    """
    widths = frame_linewidths(patch_scores)
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    ax.imshow(frame_image, cmap="gray", vmin=0.0, vmax=1.0)
    for (r, c), w, score in zip(origins, widths, patch_scores):
        rect = Rectangle(
            (c, r), patch_size, patch_size,
            fill=False, edgecolor=(1.0, 0.15, 0.15, 0.9), linewidth=float(w),
        )
        rect.set_gid(f"patch_score_{score:.6f}")
        ax.add_patch(rect)
    ax.set_axis_off()
    fig.tight_layout()
    if path is not None:
        fig.savefig(path, dpi=150)
    return fig


def render_probability_overlay(
    image: np.ndarray,
    prob_map: np.ndarray,
    path: str | Path | None = None,
    alpha_scale: float = 0.6,
):
    """Heat overlay of per-pixel probabilities on the (resized) image."""
    if image.shape != prob_map.shape:
        raise ValueError(
            f"image shape {image.shape} != probability map shape {prob_map.shape}"
        )
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    ax.imshow(image, cmap="gray", vmin=0.0, vmax=1.0)
    alpha = np.clip(prob_map, 0.0, 1.0) * alpha_scale
    ax.imshow(prob_map, cmap="inferno", vmin=0.0, vmax=1.0, alpha=alpha)
    ax.set_axis_off()
    fig.tight_layout()
    if path is not None:
        fig.savefig(path, dpi=150)
    return fig


def close_figure(fig) -> None:
    plt.close(fig)
