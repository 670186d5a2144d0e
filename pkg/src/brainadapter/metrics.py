"""Per-class precision / sensitivity / F1 with macro and support-weighted averages."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np


def _ratio(num: float, den: float) -> float:
    return float(num / den) if den else 0.0


@dataclass
class MetricsReport:
    class_names: Sequence[str]
    precision: np.ndarray
    sensitivity: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    confusion: np.ndarray  # rows = true class, columns = predicted class

    @property
    def macro(self) -> Dict[str, float]:
        return {
            "PRE": float(np.mean(self.precision)),
            "SEN": float(np.mean(self.sensitivity)),
            "F1": float(np.mean(self.f1)),
        }

    @property
    def weighted(self) -> Dict[str, float]:
        total = self.support.sum()
        w = self.support / total if total else np.zeros_like(self.support, dtype=float)
        return {
            "PRE": float(w @ self.precision),
            "SEN": float(w @ self.sensitivity),
            "F1": float(w @ self.f1),
        }

    @property
    def accuracy(self) -> float:
        return _ratio(np.trace(self.confusion), self.confusion.sum())

    def rows(self):
        """(group, PRE, SEN, F1) rows laid out like a per-class results table."""
        out = [
            (name, self.precision[i], self.sensitivity[i], self.f1[i])
            for i, name in enumerate(self.class_names)
        ]
        out.append(("M-Avg", *self.macro.values()))
        out.append(("W-Avg", *self.weighted.values()))
        return out

    def to_text(self) -> str:
        lines = ["group\tPRE\tSEN\tF1\tsupport"]
        for i, (group, pre, sen, f1) in enumerate(self.rows()):
            support = int(self.support[i]) if i < len(self.class_names) else int(self.support.sum())
            lines.append(f"{group}\t{pre:.6f}\t{sen:.6f}\t{f1:.6f}\t{support}")
        lines.append("confusion (rows=true, cols=pred)")
        lines += ["\t".join(str(int(c)) for c in row) for row in self.confusion]
        return "\n".join(lines) + "\n"


def confusion_matrix(labels, preds, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def classification_report(labels, preds, class_names: Sequence[str]) -> MetricsReport:
    """Zero denominators give 0 for PRE, SEN and F1; absent classes still count in M-Avg."""
    labels = np.asarray(labels, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("cannot score an empty prediction set")
    if labels.shape != preds.shape:
        raise ValueError(f"labels {labels.shape} and preds {preds.shape} differ in shape")
    k = len(class_names)
    cm = confusion_matrix(labels, preds, k)
    tp = np.diag(cm).astype(float)
    pred_pos = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    pre = np.array([_ratio(tp[c], pred_pos[c]) for c in range(k)])
    sen = np.array([_ratio(tp[c], actual[c]) for c in range(k)])
    f1 = np.array([_ratio(2 * pre[c] * sen[c], pre[c] + sen[c]) for c in range(k)])
    return MetricsReport(tuple(class_names), pre, sen, f1, actual, cm)
