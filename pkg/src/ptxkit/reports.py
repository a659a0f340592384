"""Cross-validated evaluation: out-of-fold scoring, per-method ROC
aggregation, Dice for the segmenter, and report/figure emission.

Outputs under the report directory:

* ``scores.csv``        - per-case score table (ensemble search input)
* ``report.json``       - per-method AUC mean/std, operating points, Dice
* ``curve_<m>.csv``     - averaged (fpr, tpr) table per method
* ``roc.png``           - overlaid averaged ROC curves
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import inference
from .data import ImageRecord, FoldAssignment
from .ensemble import METHODS, ScoreTable, fcn_area_score
from .evaluation import (
    RocCurve,
    auc,
    average_curves,
    fold_summary,
    roc_curve,
    tpr_at_fpr,
)
from .models.checkpoint import load_checkpoint, model_from_checkpoint
from .training import StudyCache, dice_positive

log = logging.getLogger(__name__)

OPERATING_FPRS = (0.01, 0.05, 0.10)


@dataclass
class MethodEvaluation:
    method: str
    fold_aucs: list[float]
    mean_auc: float
    std_auc: float
    averaged_curve: RocCurve
    tpr_at: dict[str, float]
    dice_mean: float | None = None
    dice_cases: int | None = None
    notes: list[str] | None = None


def checkpoint_paths(checkpoint_dir: str | Path, method: str, folds: list[int]) -> list[Path]:
    checkpoint_dir = Path(checkpoint_dir)
    paths = []
    missing = []
    for fold in folds:
        p = checkpoint_dir / f"{method}_fold{fold}.pt"
        if not p.is_file():
            missing.append(fold)
        paths.append(p)
    if missing:
        raise FileNotFoundError(
            f"missing {method} checkpoints for folds {missing} under {checkpoint_dir}"
        )
    return paths


def evaluate_methods(
    records: list[ImageRecord],
    assignment: FoldAssignment,
    checkpoint_dir: str | Path,
    methods: tuple[str, ...] = METHODS,
    out_dir: str | Path = "report",
) -> tuple[dict[str, MethodEvaluation], ScoreTable]:
    """Score every record with the model that did not train on its fold,
    then aggregate ROC statistics per method and write the report files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for rec in records:
        rec.fold = assignment.fold_of(rec)
    folds = sorted(set(r.fold for r in records))
    cache = StudyCache()

    all_scores: dict[str, np.ndarray] = {}
    evaluations: dict[str, MethodEvaluation] = {}
    for method in methods:
        paths = checkpoint_paths(checkpoint_dir, method, folds)
        scores = np.full(len(records), np.nan)
        fold_curves: list[RocCurve] = []
        fold_aucs: list[float] = []
        dice_values: list[tuple[float, int]] = []
        notes: list[str] = []
        for fold, ckpt_path in zip(folds, paths):
            payload = load_checkpoint(ckpt_path)
            model = model_from_checkpoint(payload)
            idx = [i for i, r in enumerate(records) if r.fold == fold]
            recs = [records[i] for i in idx]
            images = [cache.image(r) for r in recs]
            labels = np.array([r.label for r in recs])

            if method == "cnn":
                fold_scores = inference.cnn_scores(model, images, five_crop_avg=True)
            elif method == "mil":
                bags = inference.mil_bag_scores(model, images)
                fold_scores = np.array([b.bag_score for b in bags])
            else:
                input_size = int(
                    (payload.get("train_config") or {}).get("input_size") or 448
                )
                maps = inference.fcn_prob_maps(model, images, input_size)
                fold_scores = np.array([fcn_area_score(m) for m in maps])
                mean_dice, n_pos, tau = dice_positive(maps, recs, cache, input_size)
                dice_values.append((mean_dice, n_pos))
                notes.append(
                    f"fold {fold}: Dice over {n_pos} positively classified cases "
                    f"(area threshold {tau:.4g}, Youden on the held-out fold)"
                )

            scores[idx] = fold_scores
            curve = roc_curve(fold_scores, labels)
            fold_curves.append(curve)
            fold_aucs.append(auc(curve))

        mean_auc, std_auc = fold_summary(fold_aucs)
        averaged = average_curves(fold_curves)
        evaluation = MethodEvaluation(
            method=method,
            fold_aucs=fold_aucs,
            mean_auc=mean_auc,
            std_auc=std_auc,
            averaged_curve=averaged,
            tpr_at={f"{f:g}": tpr_at_fpr(averaged, f) for f in OPERATING_FPRS},
            notes=notes or None,
        )
        if dice_values:
            total = sum(n for _, n in dice_values)
            evaluation.dice_cases = total
            evaluation.dice_mean = (
                float(sum(d * n for d, n in dice_values) / total) if total else 0.0
            )
        evaluations[method] = evaluation
        all_scores[method] = scores
        log.info("%s: AUC %.4f +/- %.4f over folds %s", method, mean_auc, std_auc, folds)

    table = _score_table(records, all_scores, methods)
    _write_outputs(out_dir, evaluations, table)
    return evaluations, table


def _score_table(
    records: list[ImageRecord],
    all_scores: dict[str, np.ndarray],
    methods: tuple[str, ...],
) -> ScoreTable:
    n = len(records)
    columns = {}
    for m in METHODS:
        col = all_scores.get(m)
        # absent methods get a neutral constant column so the table schema
        # stays complete; downstream fusion treats them as uninformative
        columns[m] = col if col is not None else np.zeros(n)
    return ScoreTable(
        case_ids=[r.case_id for r in records],
        labels=np.array([r.label for r in records]),
        folds=np.array([r.fold for r in records]),
        scores=columns,
    )


def _write_outputs(
    out_dir: Path, evaluations: dict[str, MethodEvaluation], table: ScoreTable
) -> None:
    table.save(out_dir / "scores.csv")
    payload = {}
    for method, ev in evaluations.items():
        payload[method] = {
            "fold_aucs": [round(a, 6) for a in ev.fold_aucs],
            "auc_mean": round(ev.mean_auc, 6),
            "auc_std": round(ev.std_auc, 6),
            "tpr_at_fpr": {k: round(v, 6) for k, v in ev.tpr_at.items()},
        }
        if ev.dice_mean is not None:
            payload[method]["dice_positive_mean"] = round(ev.dice_mean, 6)
            payload[method]["dice_positive_cases"] = ev.dice_cases
        if ev.notes:
            payload[method]["notes"] = ev.notes
        write_curve(out_dir / f"curve_{method}.csv", ev.averaged_curve)
    with open(out_dir / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2)

    from .plots import save_roc_figure  # deferred: pulls in matplotlib

    save_roc_figure(
        {m: ev.averaged_curve for m, ev in evaluations.items()},
        out_dir / "roc.png",
        aucs={m: ev.mean_auc for m, ev in evaluations.items()},
    )


def write_curve(path: Path, curve: RocCurve) -> None:
    with open(path, "w") as fh:
        fh.write("fpr,tpr\n")
        for f, t in zip(curve.fpr, curve.tpr):
            fh.write(f"{f:.6f},{t:.6f}\n")


def load_curve(path: str | Path) -> RocCurve:
    """Read a (fpr, tpr) table written by the report path."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"curve table not found: {path}")
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if rows.shape[1] < 2:
        raise ValueError(f"{path}: expected fpr,tpr columns")
    return RocCurve(
        fpr=rows[:, 0], tpr=rows[:, 1], thresholds=np.full(len(rows), np.nan)
    )
