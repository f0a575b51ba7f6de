"""Shared scoring helpers: weighted F1 and mean absolute error."""

from __future__ import annotations

import numpy as np


def weighted_f1(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> float:
    """Per-class F1 averaged with true-class support weights; empty classes
    and zero-division cases contribute 0."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    n = y_true.size
    if n == 0:
        raise ValueError("empty evaluation set")
    score = 0.0
    for c in range(n_classes):
        true_c = y_true == c
        pred_c = y_pred == c
        support = int(true_c.sum())
        if support == 0:
            continue
        tp = int((true_c & pred_c).sum())
        denom = int(true_c.sum()) + int(pred_c.sum())
        f1 = 2.0 * tp / denom if denom else 0.0
        score += (support / n) * f1
    return score


def mean_absolute_error(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.size == 0:
        raise ValueError("empty evaluation set")
    return float(np.mean(np.abs(y_true - y_pred)))
