"""ROC analysis, Dice, fold aggregation, and paired AUC significance.

All metric functions are pure numpy and operate on image-level scores or
binary masks. The ROC convention: thresholds sweep from +inf downward,
ties share one threshold, and the trapezoidal area equals the
Mann-Whitney statistic (ties counted 1/2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

AVERAGE_GRID_POINTS = 1001


@dataclass
class RocCurve:
    """(fpr, tpr, threshold) triples from threshold +inf down to -inf."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray


def _validate_binary(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be binary {0,1}")
    if labels.min() == labels.max():
        raise ValueError("need at least one positive and one negative label")
    return labels.astype(np.int64)


def roc_curve(scores, labels) -> RocCurve:
    """Threshold sweep with tied scores grouped at a single threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = _validate_binary(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    # indices where a run of tied scores ends
    distinct = np.nonzero(np.diff(sorted_scores))[0]
    boundaries = np.concatenate([distinct, [len(sorted_scores) - 1]])

    tps = np.cumsum(sorted_labels)[boundaries]
    fps = (boundaries + 1) - tps
    p = int(labels.sum())
    n = int(len(labels) - p)

    fpr = np.concatenate([[0.0], fps / n])
    tpr = np.concatenate([[0.0], tps / p])
    thresholds = np.concatenate([[np.inf], sorted_scores[boundaries]])
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area; equals the rank statistic of the inputs."""
    return float(np.trapezoid(curve.tpr, curve.fpr))


def auc_score(scores, labels) -> float:
    return auc(roc_curve(scores, labels))


def _upper_envelope(curve: RocCurve) -> tuple[np.ndarray, np.ndarray]:
    """Collapse vertical segments, keeping the max TPR at each FPR."""
    fpr, tpr = curve.fpr, curve.tpr
    keep = np.concatenate([fpr[1:] != fpr[:-1], [True]])
    return fpr[keep], tpr[keep]


def tpr_at_fpr(curve: RocCurve, fpr_target: float) -> float:
    """TPR linearly interpolated at the target false-positive rate."""
    if not 0.0 <= fpr_target <= 1.0:
        raise ValueError(f"fpr_target must be in [0,1], got {fpr_target}")
    fpr, tpr = _upper_envelope(curve)
    return float(np.interp(fpr_target, fpr, tpr))


def average_curves(curves: list[RocCurve], grid_points: int = AVERAGE_GRID_POINTS) -> RocCurve:
    """Vertical averaging: mean TPR over a fixed FPR grid."""
    if not curves:
        raise ValueError("need at least one curve to average")
    grid = np.linspace(0.0, 1.0, grid_points)
    stack = np.stack([np.interp(grid, *_upper_envelope(c)) for c in curves])
    return RocCurve(fpr=grid, tpr=stack.mean(axis=0), thresholds=np.full(grid_points, np.nan))


def dice(pred_mask, gt_mask) -> float:
    """Overlap 2|A∩B|/(|A|+|B|); two empty masks count as perfect (1.0)."""
    a = np.asarray(pred_mask)
    b = np.asarray(gt_mask)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    a = a != 0
    b = b != 0
    denom = int(a.sum()) + int(b.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / denom


def youden_threshold(scores, labels) -> float:
    """Operating threshold maximizing TPR - FPR (ties -> higher threshold).

    Returned as a cut strictly below the optimal sweep score, so the rule
    ``score > threshold`` selects exactly the optimal operating set.
    """
    scores = np.asarray(scores, dtype=np.float64)
    curve = roc_curve(scores, labels)
    j = curve.tpr - curve.fpr
    t = curve.thresholds[int(np.argmax(j))]
    if not np.isfinite(t):
        return float(scores.max() + 1.0)
    below = scores[scores < t]
    if below.size:
        return float((t + below.max()) / 2.0)
    return float(t - 1.0)


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    z = x[order]
    n = len(x)
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j < n and z[j] == z[i]:
            j += 1
        ranks[i:j] = 0.5 * (i + j - 1) + 1.0
        i = j
    out = np.empty(n, dtype=np.float64)
    out[order] = ranks
    return out


def paired_auc_test(scores_a, scores_b, labels) -> float:
    """Two-sided p-value for the AUC difference of two models scored on
    the same cases (covariance-aware rank-based estimate). Degenerate
    variance (e.g. identical score lists) yields p = 1.0."""
    scores_a = np.asarray(scores_a, dtype=np.float64)
    scores_b = np.asarray(scores_b, dtype=np.float64)
    labels = _validate_binary(labels)
    if not (len(scores_a) == len(scores_b) == len(labels)):
        raise ValueError("score lists and labels must share length")

    order = np.argsort(-labels, kind="stable")
    preds = np.stack([scores_a[order], scores_b[order]])
    m = int(labels.sum())
    n = len(labels) - m

    tx = np.stack([_midranks(row[:m]) for row in preds])
    ty = np.stack([_midranks(row[m:]) for row in preds])
    tz = np.stack([_midranks(row) for row in preds])
    aucs = (tz[:, :m].sum(axis=1) / m - (m + 1) / 2.0) / n

    v01 = (tz[:, :m] - tx) / n
    v10 = 1.0 - (tz[:, m:] - ty) / m
    s01 = np.cov(v01)
    s10 = np.cov(v10)
    var = s01 / m + s10 / n
    var_diff = float(var[0, 0] + var[1, 1] - 2.0 * var[0, 1])
    delta = float(aucs[0] - aucs[1])
    if var_diff <= 1e-16:
        return 1.0
    z = abs(delta) / np.sqrt(var_diff)
    return float(2.0 * norm.sf(z))


def fold_summary(fold_aucs: list[float]) -> tuple[float, float]:
    """Mean and population std over the per-fold AUCs."""
    arr = np.asarray(fold_aucs, dtype=np.float64)
    return float(arr.mean()), float(arr.std())
