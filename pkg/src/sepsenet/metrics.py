"""Accuracy and the K x K confusion matrix, with text/CSV rendering."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMatrix, LabelOutOfRange, LengthMismatch


@dataclass
class ConfusionMatrix:
    """counts[t][p] = number of samples of true class t predicted as p."""

    counts: np.ndarray
    class_names: list

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(true_labels, pred_labels, class_names) -> ConfusionMatrix:
    """Tally true vs predicted labels; integer arithmetic throughout."""
    if isinstance(class_names, int):
        class_names = [f"class{i}" for i in range(class_names)]
    k = len(class_names)
    true_labels = np.asarray(true_labels, dtype=np.int64).ravel()
    pred_labels = np.asarray(pred_labels, dtype=np.int64).ravel()
    if true_labels.size != pred_labels.size:
        raise LengthMismatch(f"{true_labels.size} true vs {pred_labels.size} predicted labels")
    counts = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(true_labels, pred_labels):
        if not (0 <= t < k and 0 <= p < k):
            raise LabelOutOfRange(f"label pair ({t}, {p}) outside [0, {k})")
        counts[t, p] += 1
    return ConfusionMatrix(counts, list(class_names))


def accuracy(cm: ConfusionMatrix) -> float:
    """trace / total; exact integer arithmetic until the final division."""
    total = cm.total
    if total == 0:
        raise EmptyMatrix("no samples counted")
    return int(np.trace(cm.counts)) / total


def render_text(cm: ConfusionMatrix) -> str:
    """Right-aligned table with row (true) and column (predicted) labels."""
    names = cm.class_names
    width = max(max(len(n) for n in names), len(str(cm.counts.max(initial=0))), 5) + 2
    lines = ["true \\ pred".ljust(width) + "".join(n.rjust(width) for n in names)]
    for i, name in enumerate(names):
        row = "".join(str(int(v)).rjust(width) for v in cm.counts[i])
        lines.append(name.ljust(width) + row)
    return "\n".join(lines)


def render_csv(cm: ConfusionMatrix) -> str:
    """Header row of class names, then K rows of counts."""
    out = io.StringIO()
    out.write(",".join(cm.class_names) + "\n")
    for row in cm.counts:
        out.write(",".join(str(int(v)) for v in row) + "\n")
    return out.getvalue()


def write_csv(cm: ConfusionMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(render_csv(cm))
