import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brainadapter.metrics import classification_report, confusion_matrix
from brainadapter.verify import brute_force_metrics

NAMES = ("AD", "CN", "MCI")


class TestWorkedExamples:
    def test_perfect_predictions(self):
        labels = [0, 1, 2, 2, 1, 0]
        rep = classification_report(labels, labels, NAMES)
        for arr in (rep.precision, rep.sensitivity, rep.f1):
            np.testing.assert_array_equal(arr, 1.0)
        assert rep.macro == {"PRE": 1.0, "SEN": 1.0, "F1": 1.0}
        assert rep.weighted == {"PRE": 1.0, "SEN": 1.0, "F1": 1.0}

    def test_two_class_hand_computed(self):
        """labels AABB, preds ABBB: A has PRE 1, SEN 1/2; B has PRE 2/3, SEN 1."""
        rep = classification_report([0, 0, 1, 1], [0, 1, 1, 1], ("A", "B"))
        assert rep.precision.tolist() == [1.0, 2 / 3]
        assert rep.sensitivity.tolist() == [0.5, 1.0]
        assert rep.f1[0] == pytest.approx(2 / 3, abs=1e-15)
        assert rep.f1[1] == pytest.approx(0.8, abs=1e-15)
        assert rep.macro["F1"] == pytest.approx(11 / 15, abs=1e-15)

    def test_absent_class_scores_zero_and_counts_in_macro(self):
        rep = classification_report([0, 0, 1, 1], [0, 0, 1, 1], NAMES)
        assert (rep.precision[2], rep.sensitivity[2], rep.f1[2]) == (0.0, 0.0, 0.0)
        assert rep.macro["F1"] == pytest.approx(2 / 3)
        assert rep.weighted["F1"] == 1.0

    def test_confusion_rows_are_truth(self):
        cm = confusion_matrix([0, 0, 2], [1, 0, 2], 3)
        assert cm.tolist() == [[1, 1, 0], [0, 0, 0], [0, 0, 1]]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            classification_report([], [], NAMES)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            classification_report([0, 1], [0], NAMES)

    def test_table_layout(self):
        rep = classification_report([0, 1, 2], [0, 1, 1], NAMES)
        groups = [row[0] for row in rep.rows()]
        assert groups == ["AD", "CN", "MCI", "M-Avg", "W-Avg"]
        assert rep.to_text().splitlines()[0] == "group\tPRE\tSEN\tF1\tsupport"


labels_preds = st.integers(1, 60).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 2), min_size=n, max_size=n), st.lists(st.integers(0, 2), min_size=n, max_size=n))
)


class TestProperties:
    @settings(max_examples=100, deadline=None)
    @given(labels_preds)
    def test_matches_brute_force(self, lp):
        labels, preds = lp
        rep = classification_report(labels, preds, NAMES)
        pre, sen, f1, macro, weighted = brute_force_metrics(labels, preds, 3)
        assert rep.precision.tolist() == [float(x) for x in pre]
        assert rep.sensitivity.tolist() == [float(x) for x in sen]
        np.testing.assert_allclose(rep.f1, [float(x) for x in f1], rtol=0, atol=1e-15)
        for key in ("PRE", "SEN", "F1"):
            assert rep.macro[key] == pytest.approx(float(macro[key]), abs=1e-15)
            assert rep.weighted[key] == pytest.approx(float(weighted[key]), abs=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 15), st.data())
    def test_equal_support_weighted_equals_macro(self, per_class, data):
        labels = np.repeat(np.arange(3), per_class)
        preds = data.draw(st.lists(st.integers(0, 2), min_size=labels.size, max_size=labels.size))
        rep = classification_report(labels, preds, NAMES)
        for key in ("PRE", "SEN", "F1"):
            assert rep.weighted[key] == pytest.approx(rep.macro[key], abs=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(labels_preds)
    def test_scores_in_unit_interval(self, lp):
        rep = classification_report(*lp, NAMES)
        for arr in (rep.precision, rep.sensitivity, rep.f1):
            assert ((arr >= 0) & (arr <= 1)).all()
        assert rep.confusion.sum() == len(lp[0])
