"""Image-level score fusion: area scoring for the segmenter and the
exhaustive simplex-grid search over linear combinations of the methods."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evaluation import auc_score

METHODS = ("cnn", "mil", "fcn")
DEFAULT_GRID_STEP = 0.05
SIMPLEX_TOL = 1e-9


@dataclass
class ScoreTable:
    """Per-case scores for every method, keyed by case id."""

    case_ids: list[str]
    labels: np.ndarray  # (n,) int {0,1}
    folds: np.ndarray  # (n,) int
    scores: dict[str, np.ndarray]  # method -> (n,) float

    def __post_init__(self) -> None:
        n = len(self.case_ids)
        for method in METHODS:
            if method not in self.scores:
                raise ValueError(f"score table missing method {method!r}")
            col = np.asarray(self.scores[method], dtype=np.float64)
            if col.shape != (n,):
                raise ValueError(f"score column {method!r} has wrong length")
            if not np.isfinite(col).all():
                raise ValueError(f"score column {method!r} contains non-finite values")
            self.scores[method] = col
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.folds = np.asarray(self.folds, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.case_ids)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["case_id", "label", "fold", *(f"score_{m}" for m in METHODS)])
            for i, case_id in enumerate(self.case_ids):
                writer.writerow(
                    [
                        case_id,
                        int(self.labels[i]),
                        int(self.folds[i]),
                        *(repr(float(self.scores[m][i])) for m in METHODS),
                    ]
                )

    @classmethod
    def load(cls, path: str | Path) -> "ScoreTable":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"score table not found: {path}")
        case_ids: list[str] = []
        labels: list[int] = []
        folds: list[int] = []
        cols: dict[str, list[float]] = {m: [] for m in METHODS}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                case_ids.append(row["case_id"])
                labels.append(int(row["label"]))
                folds.append(int(row["fold"]))
                for m in METHODS:
                    cols[m].append(float(row[f"score_{m}"]))
        return cls(
            case_ids=case_ids,
            labels=np.asarray(labels),
            folds=np.asarray(folds),
            scores={m: np.asarray(v) for m, v in cols.items()},
        )


def fcn_area_score(prob_map: np.ndarray, threshold: float = 0.5) -> float:
    """Fraction of pixels whose probability exceeds the threshold."""
    prob_map = np.asarray(prob_map)
    return float(np.mean(prob_map > threshold))


def validate_weights(weights) -> tuple[float, float, float]:
    w = tuple(float(x) for x in weights)
    if len(w) != 3 or any(x < -SIMPLEX_TOL for x in w) or abs(sum(w) - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"weights must be nonnegative and sum to 1, got {weights}")
    return w


def combine(table: ScoreTable, weights) -> np.ndarray:
    """Per-case linear fusion of the three method scores."""
    w = validate_weights(weights)
    out = np.zeros(len(table), dtype=np.float64)
    for wi, method in zip(w, METHODS):
        out += wi * table.scores[method]
    return out


def simplex_grid(step: float) -> list[tuple[float, float, float]]:
    """All weight triples on the simplex lattice, lexicographically sorted."""
    n = round(1.0 / step)
    if abs(n * step - 1.0) > SIMPLEX_TOL or n < 1:
        raise ValueError(f"grid step {step} must divide 1")
    points = []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            k = n - i - j
            points.append((i / n, j / n, k / n))
    return points


def exhaustive_search(
    table: ScoreTable,
    grid_step: float = DEFAULT_GRID_STEP,
    case_mask: np.ndarray | None = None,
) -> tuple[tuple[float, float, float], float]:
    """Best simplex-grid weights by AUC on the selected cases.

    Ties resolve to the lexicographically smallest weight triple, so the
    result is deterministic regardless of evaluation order.
    """
    if case_mask is None:
        case_mask = np.ones(len(table), dtype=bool)
    labels = table.labels[case_mask]
    columns = {m: table.scores[m][case_mask] for m in METHODS}

    best_w: tuple[float, float, float] | None = None
    best_auc = -np.inf
    for w in simplex_grid(grid_step):
        fused = w[0] * columns["cnn"] + w[1] * columns["mil"] + w[2] * columns["fcn"]
        a = auc_score(fused, labels)
        if a > best_auc:
            best_auc = a
            best_w = w
    assert best_w is not None
    return best_w, float(best_auc)


@dataclass
class FoldSearchResult:
    fold: int
    weights: tuple[float, float, float]
    search_auc: float  # on the folds used for weight selection
    test_auc: float  # winner re-evaluated on the held-out fold


def cross_validated_search(
    table: ScoreTable, grid_step: float = DEFAULT_GRID_STEP
) -> list[FoldSearchResult]:
    """For each fold: select weights on the other folds, score on the fold.

    Keeps weight selection off the cases it is reported on, which is
    stricter than fusing and searching on the same data.
    """
    results = []
    for fold in sorted(set(int(f) for f in table.folds)):
        search_mask = table.folds != fold
        test_mask = ~search_mask
        weights, search_auc = exhaustive_search(table, grid_step, search_mask)
        fused = combine(table, weights)
        test_auc = auc_score(fused[test_mask], table.labels[test_mask])
        results.append(
            FoldSearchResult(
                fold=fold, weights=weights, search_auc=search_auc, test_auc=test_auc
            )
        )
    return results
