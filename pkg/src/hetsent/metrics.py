"""Accuracy, macro-F1 and confusion-matrix computation."""
from __future__ import annotations

from typing import Sequence

import numpy as np


def confusion_matrix(gold: Sequence[int], pred: Sequence[int], classes: int = 3) -> np.ndarray:
    cm = np.zeros((classes, classes), dtype=int)
    for g, p in zip(gold, pred):
        cm[g, p] += 1
    return cm


def precision_recall_f1(cm: np.ndarray) -> list[dict]:
    """Per-class precision/recall/F1; empty denominators contribute 0."""
    out = []
    for c in range(cm.shape[0]):
        tp = cm[c, c]
        pred_c = cm[:, c].sum()
        gold_c = cm[c, :].sum()
        precision = tp / pred_c if pred_c else 0.0
        recall = tp / gold_c if gold_c else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        out.append({"precision": float(precision), "recall": float(recall), "f1": float(f1)})
    return out


def accuracy(cm: np.ndarray) -> float:
    total = cm.sum()
    return float(np.trace(cm) / total) if total else 0.0


def macro_f1(cm: np.ndarray) -> float:
    """Unweighted mean of per-class F1 over all classes."""
    per_class = precision_recall_f1(cm)
    return float(np.mean([c["f1"] for c in per_class]))
