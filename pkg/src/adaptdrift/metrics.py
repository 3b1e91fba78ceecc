"""Detection and incremental-learning metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import EmptyInput, LengthMismatch, SingleClass


@dataclass(frozen=True)
class MetricSet:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def support(self) -> int:
        return self.tp + self.fn


def _bool_pair(a, b):
    a = np.asarray(a, dtype=bool).reshape(-1)
    b = np.asarray(b, dtype=bool).reshape(-1)
    if len(a) != len(b):
        raise LengthMismatch(f"lengths {len(a)} and {len(b)} differ")
    if len(a) == 0:
        raise EmptyInput("no samples")
    return a, b


def precision_recall_f1(predicted_positive: Sequence[bool], truth_positive: Sequence[bool]) -> MetricSet:
    """Confusion-matrix P/R/F1. Any ratio with a zero denominator is 0."""
    pred, truth = _bool_pair(predicted_positive, truth_positive)
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    tn = int(np.sum(~pred & ~truth))
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return MetricSet(p, r, f1, tp, fp, fn, tn)


def auroc(scores: Sequence[float], truth_positive: Sequence[bool]) -> float:
    """Mann-Whitney AUROC; tied pos/neg pairs count one half."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    t = np.asarray(truth_positive, dtype=bool).reshape(-1)
    if len(s) != len(t):
        raise LengthMismatch(f"lengths {len(s)} and {len(t)} differ")
    n_pos = int(t.sum())
    n_neg = len(t) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUROC needs both positive and negative samples")
    ranks = rankdata(s)  # average ranks for ties
    u = ranks[t].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def accuracy(predicted: Sequence[int], truth: Sequence[int]) -> float:
    p = np.asarray(predicted).reshape(-1)
    t = np.asarray(truth).reshape(-1)
    if len(p) != len(t):
        raise LengthMismatch(f"lengths {len(p)} and {len(t)} differ")
    if len(p) == 0:
        raise EmptyInput("no samples")
    return float(np.mean(p == t))


def avg_incremental_accuracy(history: Sequence[float]) -> float:
    """Mean of per-stage accuracies, each measured on the classes seen so far."""
    if len(history) == 0:
        raise EmptyInput("empty accuracy history")
    return float(np.mean(np.asarray(history, dtype=np.float64)))
