import numpy as np
import pytest

from ptxkit.ensemble import (
    METHODS,
    ScoreTable,
    combine,
    cross_validated_search,
    exhaustive_search,
    fcn_area_score,
    simplex_grid,
    validate_weights,
)
from ptxkit.evaluation import auc_score


def make_table(rng, n=120, folds=5, cnn_quality=2.0, mil_quality=0.0, fcn_quality=0.0):
    labels = (rng.random(n) > 0.5).astype(int)
    labels[:2] = [0, 1]

    def column(quality):
        return 1 / (1 + np.exp(-(quality * (labels - 0.5) + rng.normal(0, 1, n))))

    return ScoreTable(
        case_ids=[f"case{i}" for i in range(n)],
        labels=labels,
        folds=np.arange(n) % folds,
        scores={
            "cnn": column(cnn_quality),
            "mil": column(mil_quality),
            "fcn": column(fcn_quality),
        },
    )


class TestAreaScore:
    def test_zero_map(self):
        assert fcn_area_score(np.zeros((32, 32))) == 0.0

    def test_quarter_above_threshold(self):
        m = np.full((20, 20), 0.1)
        m[:10, :10] = 0.9
        assert fcn_area_score(m, 0.5) == 0.25

    def test_threshold_zero_on_positive_map(self):
        assert fcn_area_score(np.full((8, 8), 1e-4), 0.0) == 1.0


class TestCombine:
    def test_vertex_reproduces_method_exactly(self, rng):
        table = make_table(rng)
        for i, method in enumerate(METHODS):
            w = [0.0, 0.0, 0.0]
            w[i] = 1.0
            fused = combine(table, w)
            np.testing.assert_array_equal(fused, table.scores[method])

    def test_arithmetic(self):
        table = ScoreTable(
            case_ids=["a"],
            labels=np.array([1]),
            folds=np.array([0]),
            scores={
                "cnn": np.array([0.8]),
                "mil": np.array([0.4]),
                "fcn": np.array([0.0]),
            },
        )
        assert combine(table, (0.5, 0.5, 0.0))[0] == pytest.approx(0.6)

    def test_monotone_in_each_score(self, rng):
        table = make_table(rng, n=30)
        w = (0.3, 0.3, 0.4)
        base = combine(table, w)
        for method in METHODS:
            bumped = {m: c.copy() for m, c in table.scores.items()}
            bumped[method][7] += 0.2
            table2 = ScoreTable(
                case_ids=table.case_ids,
                labels=table.labels,
                folds=table.folds,
                scores=bumped,
            )
            out = combine(table2, w)
            assert out[7] >= base[7]
            np.testing.assert_array_equal(np.delete(out, 7), np.delete(base, 7))

    def test_bad_weights_rejected(self, rng):
        table = make_table(rng, n=20)
        with pytest.raises(ValueError):
            combine(table, (0.5, 0.5, 0.5))
        with pytest.raises(ValueError):
            combine(table, (-0.1, 0.6, 0.5))
        with pytest.raises(ValueError):
            validate_weights((1.0, 0.0))


class TestSimplexGrid:
    def test_coarse_grid_count(self):
        assert len(simplex_grid(0.5)) == 6

    def test_default_grid_count(self):
        assert len(simplex_grid(0.05)) == 231

    def test_all_points_on_simplex(self):
        for w in simplex_grid(0.1):
            validate_weights(w)

    def test_bad_step(self):
        with pytest.raises(ValueError):
            simplex_grid(0.3)


class TestExhaustiveSearch:
    def test_perfect_ranker_wins(self, rng):
        labels = (rng.random(80) > 0.5).astype(int)
        labels[:2] = [0, 1]
        # perfect but narrow-margin ranker: any admixture of the random
        # columns flips some pair, so only cnn-dominant weights stay perfect
        margin = rng.uniform(0.005, 0.02, 80)
        table = ScoreTable(
            case_ids=[str(i) for i in range(80)],
            labels=labels,
            folds=np.zeros(80, dtype=int),
            scores={
                "cnn": 0.5 + np.where(labels == 1, margin, -margin),
                "mil": rng.random(80),
                "fcn": rng.random(80),
            },
        )
        weights, best = exhaustive_search(table, grid_step=0.05)
        assert best == pytest.approx(1.0)
        assert weights[0] >= 0.9

    def test_tie_breaks_lexicographically_smallest(self, rng):
        col = rng.random(40)
        labels = (rng.random(40) > 0.5).astype(int)
        labels[:2] = [0, 1]
        table = ScoreTable(
            case_ids=[str(i) for i in range(40)],
            labels=labels,
            folds=np.zeros(40, dtype=int),
            scores={"cnn": col, "mil": col.copy(), "fcn": col.copy()},
        )
        weights, _ = exhaustive_search(table, grid_step=0.5)
        assert weights == (0.0, 0.0, 1.0)  # smallest triple in lexicographic order

    def test_beats_every_vertex(self, rng):
        table = make_table(rng, cnn_quality=1.5, mil_quality=1.0, fcn_quality=0.8)
        weights, best = exhaustive_search(table, grid_step=0.1)
        for method in METHODS:
            assert best >= auc_score(table.scores[method], table.labels)

    def test_argmax_invariant_under_common_affine_rescale(self, rng):
        table = make_table(rng, cnn_quality=1.2, mil_quality=0.9, fcn_quality=0.5)
        w1, _ = exhaustive_search(table, grid_step=0.25)
        rescaled = ScoreTable(
            case_ids=table.case_ids,
            labels=table.labels,
            folds=table.folds,
            scores={m: 0.25 * c + 0.4 for m, c in table.scores.items()},
        )
        w2, _ = exhaustive_search(rescaled, grid_step=0.25)
        assert w1 == w2


class TestCrossValidatedSearch:
    def test_shape_and_masks(self, rng):
        table = make_table(rng, n=100, folds=5, cnn_quality=2.5)
        results = cross_validated_search(table, grid_step=0.25)
        assert [r.fold for r in results] == [0, 1, 2, 3, 4]
        for r in results:
            validate_weights(r.weights)
            assert 0.0 <= r.test_auc <= 1.0


class TestScoreTableIO:
    def test_round_trip_exact(self, tmp_path, rng):
        table = make_table(rng, n=25)
        path = tmp_path / "scores.csv"
        table.save(path)
        loaded = ScoreTable.load(path)
        assert loaded.case_ids == table.case_ids
        np.testing.assert_array_equal(loaded.labels, table.labels)
        np.testing.assert_array_equal(loaded.folds, table.folds)
        for m in METHODS:
            np.testing.assert_array_equal(loaded.scores[m], table.scores[m])

    def test_missing_column_rejected(self, rng):
        with pytest.raises(ValueError, match="missing method"):
            ScoreTable(
                case_ids=["a"],
                labels=np.array([1]),
                folds=np.array([0]),
                scores={"cnn": np.array([0.5])},
            )

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            ScoreTable(
                case_ids=["a"],
                labels=np.array([1]),
                folds=np.array([0]),
                scores={
                    "cnn": np.array([np.nan]),
                    "mil": np.array([0.0]),
                    "fcn": np.array([0.0]),
                },
            )
