"""Confusion matrix and accuracy, including the reported fixture cells."""

import numpy as np
import pytest

from sepsenet.errors import EmptyMatrix, LabelOutOfRange, LengthMismatch
from sepsenet.metrics import accuracy, confusion, render_csv, render_text, write_csv

CLASSES = ["glioma", "meningioma", "notumor", "pituitary"]


def fixture_labels():
    """Reported evaluation cells: 205/205 correct no-tumor; glioma row
    151 correct with 3 misread as meningioma."""
    true = [2] * 205 + [0] * 154
    pred = [2] * 205 + [0] * 151 + [1] * 3
    return true, pred


class TestConfusion:
    def test_perfect_predictions_diagonal(self):
        cm = confusion([0, 1, 2, 3, 2], [0, 1, 2, 3, 2], CLASSES)
        assert np.array_equal(cm.counts, np.diag([1, 1, 2, 1]))
        assert accuracy(cm) == 1.0

    def test_reported_fixture_cells(self):
        true, pred = fixture_labels()
        cm = confusion(true, pred, CLASSES)
        assert cm.counts[2, 2] == 205           # every no-tumor case correct
        assert cm.counts[0, 0] == 151           # glioma correct
        assert cm.counts[0, 1] == 3             # glioma read as meningioma
        assert cm.counts[0].sum() == 154

    def test_glioma_row_accuracy(self):
        # the glioma row alone: 151 of 154
        cm = confusion([0] * 154, [0] * 151 + [1] * 3, CLASSES)
        assert accuracy(cm) == pytest.approx(151 / 154)
        assert round(accuracy(cm), 4) == 0.9805

    def test_empty_input_zero_matrix(self):
        cm = confusion([], [], CLASSES)
        assert cm.counts.sum() == 0
        with pytest.raises(EmptyMatrix):
            accuracy(cm)

    def test_all_wrong_two_class(self):
        cm = confusion([0, 1], [1, 0], 2)
        assert accuracy(cm) == 0.0

    def test_pair_order_independence(self, rng):
        true = rng.integers(0, 4, 60)
        pred = rng.integers(0, 4, 60)
        cm1 = confusion(true, pred, CLASSES)
        perm = rng.permutation(60)
        cm2 = confusion(true[perm], pred[perm], CLASSES)
        assert np.array_equal(cm1.counts, cm2.counts)

    def test_row_sums_are_true_counts(self, rng):
        true = rng.integers(0, 4, 100)
        pred = rng.integers(0, 4, 100)
        cm = confusion(true, pred, CLASSES)
        for k in range(4):
            assert cm.counts[k].sum() == int((true == k).sum())

    def test_label_out_of_range(self):
        with pytest.raises(LabelOutOfRange):
            confusion([0, 4], [0, 0], CLASSES)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            confusion([0, 1], [0], CLASSES)


class TestRendering:
    def test_csv_layout(self):
        true, pred = fixture_labels()
        cm = confusion(true, pred, CLASSES)
        lines = render_csv(cm).splitlines()
        assert lines[0] == "glioma,meningioma,notumor,pituitary"
        assert len(lines) == 5
        assert lines[1] == "151,3,0,0"
        assert lines[3] == "0,0,205,0"

    def test_csv_file_lf_endings(self, tmp_path):
        cm = confusion([0, 1], [0, 1], ["a", "b"])
        p = tmp_path / "cm.csv"
        write_csv(cm, p)
        raw = p.read_bytes()
        assert b"\r" not in raw
        assert raw.decode().splitlines()[0] == "a,b"

    def test_text_contains_labels_right_aligned(self):
        cm = confusion([0, 1], [1, 1], ["ape", "bee"])
        text = render_text(cm)
        assert "ape" in text and "bee" in text
        rows = text.splitlines()
        assert len(rows) == 3
