"""Confusion counting and IoU/precision/recall reduction."""

import json

import numpy as np
import pytest

from spectraflake.metrics import EvalReport, confusion, evaluate, macro, per_class


class TestConfusion:
    def test_perfect_prediction_is_diagonal(self):
        labels = np.arange(12).reshape(3, 4) % 3
        conf = confusion(labels, labels, 3)
        assert np.array_equal(conf, np.diag([4, 4, 4]))

    def test_single_off_diagonal_cell(self):
        pred = np.full((2, 3), 2, np.uint8)
        target = np.full((2, 3), 1, np.uint8)
        conf = confusion(pred, target, 4)
        want = np.zeros((4, 4), np.int64)
        want[1, 2] = 6
        assert np.array_equal(conf, want)

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_bruteforce_pair_counts(self, seed):
        rng = np.random.default_rng(seed)
        pred = rng.integers(0, 5, (13, 17)).astype(np.uint8)
        target = rng.integers(0, 5, (13, 17)).astype(np.uint8)
        conf = confusion(pred, target, 5)
        assert conf.sum() == 13 * 17
        for t in range(5):
            for p in range(5):
                want = int(np.sum((target == t) & (pred == p)))
                assert conf[t, p] == want

    def test_shape_and_range_errors(self):
        with pytest.raises(ValueError, match="shape"):
            confusion(np.zeros((2, 2), np.uint8), np.zeros((2, 3), np.uint8), 2)
        with pytest.raises(ValueError, match="class"):
            confusion(np.full((2, 2), 7, np.uint8), np.zeros((2, 2), np.uint8), 5)


class TestPerClass:
    def test_perfect_prediction_all_hundred(self):
        per = per_class(np.diag([5, 2, 9]))
        assert np.allclose(per, 100.0)

    def test_half_coverage_no_false_positives(self):
        # class 1: half its pixels predicted background, none stolen.
        conf = np.array([[10, 0], [5, 5]])
        per = per_class(conf)
        assert per[1].tolist() == [50.0, 100.0, 50.0]

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_independent_formulas(self, seed):
        rng = np.random.default_rng(10 + seed)
        conf = rng.integers(0, 40, (5, 5)).astype(np.int64)
        per = per_class(conf)
        for k in range(5):
            tp = conf[k, k]
            fp = conf[:, k].sum() - tp
            fn = conf[k, :].sum() - tp
            for col, denom in ((0, tp + fp + fn), (1, tp + fp), (2, tp + fn)):
                if denom == 0:
                    assert np.isnan(per[k, col])
                else:
                    assert abs(per[k, col] - 100.0 * tp / denom) <= 1e-9

    def test_undefined_class_is_nan(self):
        conf = np.zeros((3, 3), np.int64)
        conf[0, 0] = 10
        per = per_class(conf)
        assert np.isnan(per[1]).all() and np.isnan(per[2]).all()

    @pytest.mark.parametrize("seed", range(4))
    def test_iou_never_exceeds_precision_or_recall(self, seed):
        rng = np.random.default_rng(20 + seed)
        per = per_class(rng.integers(1, 30, (6, 6)).astype(np.int64))
        assert np.all(per[:, 0] <= per[:, 1] + 1e-12)
        assert np.all(per[:, 0] <= per[:, 2] + 1e-12)


class TestMacro:
    def test_published_crosscheck_one(self):
        ious = np.array([98.7, 89.0, 79.5, 83.0, 84.2])
        per = np.stack([ious, ious, ious], axis=1)
        value = macro(per)[0]
        assert value == pytest.approx(86.88)
        assert round(value, 1) == 86.9

    def test_published_crosscheck_two(self):
        ious = np.array([98.6, 68.0, 81.8, 82.5, 71.1])
        per = np.stack([ious, ious, ious], axis=1)
        value = macro(per)[0]
        assert value == pytest.approx(80.40)
        assert round(value, 1) == 80.4

    def test_single_class_macro_is_itself(self):
        per = np.array([[70.0, 80.0, 90.0]])
        assert macro(per).tolist() == [70.0, 80.0, 90.0]

    def test_undefined_classes_excluded(self):
        per = np.array([[100.0, 100.0, 100.0], [np.nan, np.nan, np.nan]])
        assert macro(per).tolist() == [100.0, 100.0, 100.0]

    def test_all_undefined_is_an_error(self):
        with pytest.raises(ValueError, match="undefined"):
            macro(np.full((3, 3), np.nan))

    @pytest.mark.parametrize("seed", range(3))
    def test_label_permutation_invariance(self, seed):
        rng = np.random.default_rng(30 + seed)
        pred = rng.integers(0, 4, (11, 9)).astype(np.uint8)
        target = rng.integers(0, 4, (11, 9)).astype(np.uint8)
        perm = rng.permutation(4).astype(np.uint8)
        base = macro(per_class(confusion(pred, target, 4)))
        permuted = macro(per_class(confusion(perm[pred], perm[target], 4)))
        assert np.allclose(np.sort(base), np.sort(permuted))
        assert np.allclose(base, permuted)


class TestEvalReport:
    def make_report(self):
        pred = np.array([[0, 1], [2, 2]], np.uint8)
        target = np.array([[0, 1], [1, 2]], np.uint8)
        return evaluate(pred, target, 3, ("BG", "A", "B"))

    def test_json_payload(self):
        payload = json.loads(self.make_report().to_json())
        assert payload["classes"][0]["name"] == "BG"
        assert payload["macro"]["iou"] is not None
        assert np.array(payload["confusion"]).sum() == 4

    def test_table_has_macro_row(self):
        table = self.make_report().format_table()
        assert "macro" in table and "BG" in table

    def test_csv_row_cell_count(self):
        row = self.make_report().csv_row()
        assert len(row.split(",")) == 3 + 3 * 3

    def test_undefined_rendered_as_na(self):
        pred = np.zeros((2, 2), np.uint8)
        report = evaluate(pred, pred, 2, ("BG", "A"))
        assert "n/a" in report.format_table()
        assert json.loads(report.to_json())["classes"][1]["iou"] is None
