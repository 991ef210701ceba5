"""Partition agreement: confusion tables and the adjusted Rand index."""

from __future__ import annotations

import numpy as np

from .errors import DomainError


def _pair(truth, predicted):
    truth = np.asarray(truth).ravel()
    predicted = np.asarray(predicted).ravel()
    if truth.shape != predicted.shape:
        raise DomainError(f"label vectors differ in length: {truth.size} vs {predicted.size}")
    return truth, predicted


def confusion_table(truth, predicted):
    """Counts of (true class, predicted class); returns ``(table, true_values, predicted_values)``."""
    truth, predicted = _pair(truth, predicted)
    t_vals, t_idx = np.unique(truth, return_inverse=True)
    p_vals, p_idx = np.unique(predicted, return_inverse=True)
    table = np.zeros((t_vals.size, p_vals.size), dtype=np.int64)
    np.add.at(table, (t_idx, p_idx), 1)
    return table, t_vals, p_vals


def _pairs(x):
    x = np.asarray(x, dtype=object)
    return int(sum(int(v) * (int(v) - 1) // 2 for v in x.ravel()))


def ari_from_counts(index: int, sum_rows: int, sum_cols: int, total: int) -> float:
    """Hubert-Arabie adjustment from pair counts (exact integer arithmetic up to the division)."""
    # (index - expected) / (max - expected), scaled by total to stay in integers
    num = index * total - sum_rows * sum_cols
    den = (sum_rows + sum_cols) * total - 2 * sum_rows * sum_cols
    if den == 0:
        return 1.0
    return 2 * num / den


def adjusted_rand_index(truth, predicted) -> float:
    truth, predicted = _pair(truth, predicted)
    if truth.size < 2:
        raise DomainError("the adjusted Rand index needs at least two observations")
    table, _, _ = confusion_table(truth, predicted)
    return ari_from_counts(_pairs(table), _pairs(table.sum(axis=1)), _pairs(table.sum(axis=0)),
                           truth.size * (truth.size - 1) // 2)
