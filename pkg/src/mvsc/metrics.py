"""Clustering evaluation: ACC, NMI, pairwise F-measure, Rand index, ranks.

All metrics are invariant to relabeling of either partition and live in
[0, 1].  Pair-based quantities are computed from the contingency table
with exact integer arithmetic, so they agree exactly with O(n²) pair
enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, log

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import rankdata


class MetricError(ValueError):
    """Label vectors disagree in length or are empty."""


@dataclass(frozen=True)
class MetricReport:
    """The four headline clustering scores for one run."""

    nmi: float
    acc: float
    f_measure: float
    rand_index: float

    def __post_init__(self):
        for name in ("nmi", "acc", "f_measure", "rand_index"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise MetricError(f"{name}={v} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "nmi": self.nmi,
            "acc": self.acc,
            "f_measure": self.f_measure,
            "rand_index": self.rand_index,
        }


def _check_labels(pred, truth, min_n: int = 1) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.ndim != 1 or truth.ndim != 1 or pred.shape != truth.shape:
        raise MetricError(f"label vectors must match: {pred.shape} vs {truth.shape}")
    if pred.size < min_n:
        raise MetricError(f"need at least {min_n} samples, got {pred.size}")
    if pred.min() < 0 or truth.min() < 0:
        raise MetricError("cluster ids must be nonnegative")
    return pred, truth


def contingency_table(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Counts[i, j] = #samples with predicted id i and true id j."""
    cp = int(pred.max()) + 1
    ct = int(truth.max()) + 1
    table = np.zeros((cp, ct), dtype=np.int64)
    np.add.at(table, (pred, truth), 1)
    return table


def accuracy(pred, truth) -> float:
    """Best-match accuracy: optimal injective mapping of predicted ids.

    Solved as a linear assignment on the (padded square) contingency table,
    which equals exhaustive search over id permutations.
    """
    pred, truth = _check_labels(pred, truth)
    table = contingency_table(pred, truth)
    size = max(table.shape)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[: table.shape[0], : table.shape[1]] = table
    rows, cols = linear_sum_assignment(-padded)
    return float(padded[rows, cols].sum()) / pred.size


def nmi(pred, truth) -> float:
    """Mutual information over the geometric mean of the two entropies.

    Both partitions trivial (one cluster each) scores 1; exactly one
    trivial partition scores 0 (its mutual information is 0).
    """
    pred, truth = _check_labels(pred, truth)
    n = pred.size
    table = contingency_table(pred, truth)
    pi = table.sum(axis=1) / n
    pj = table.sum(axis=0) / n
    h_pred = -sum(p * log(p) for p in pi if p > 0)
    h_truth = -sum(p * log(p) for p in pj if p > 0)
    if h_pred == 0.0 and h_truth == 0.0:
        return 1.0
    if h_pred == 0.0 or h_truth == 0.0:
        return 0.0
    mi = 0.0
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            if table[i, j]:
                p = table[i, j] / n
                mi += p * log(p / (pi[i] * pj[j]))
    value = mi / np.sqrt(h_pred * h_truth)
    return float(min(1.0, max(0.0, value)))


def _pair_counts(pred: np.ndarray, truth: np.ndarray) -> tuple[int, int, int, int]:
    """(TP, FP, FN, TN) over sample pairs, exact integers."""
    n = pred.size
    table = contingency_table(pred, truth)
    together_both = int(sum(comb(int(v), 2) for v in table.ravel()))
    together_pred = int(sum(comb(int(v), 2) for v in table.sum(axis=1)))
    together_truth = int(sum(comb(int(v), 2) for v in table.sum(axis=0)))
    tp = together_both
    fp = together_pred - tp
    fn = together_truth - tp
    tn = comb(n, 2) - tp - fp - fn
    return tp, fp, fn, tn


def rand_index(pred, truth) -> float:
    """Fraction of sample pairs on which the two partitions agree."""
    pred, truth = _check_labels(pred, truth, min_n=2)
    tp, fp, fn, tn = _pair_counts(pred, truth)
    return (tp + tn) / comb(pred.size, 2)


def f_measure(pred, truth) -> float:
    """Pairwise F1 over same-cluster decisions; 0 when precision+recall is 0."""
    pred, truth = _check_labels(pred, truth, min_n=2)
    tp, fp, fn, _ = _pair_counts(pred, truth)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def evaluate(pred, truth) -> MetricReport:
    return MetricReport(
        nmi=nmi(pred, truth),
        acc=accuracy(pred, truth),
        f_measure=f_measure(pred, truth),
        rand_index=rand_index(pred, truth),
    )


def average_rank(scores: np.ndarray) -> np.ndarray:
    """Mean rank of each method across metrics, higher scores ranking first.

    ``scores`` is (methods, metrics); ties share the mean of their rank
    positions.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim == 1:
        scores = scores[:, None]
    if scores.size == 0:
        raise MetricError("score table must be nonempty")
    ranks = np.column_stack(
        [rankdata(-scores[:, j], method="average") for j in range(scores.shape[1])]
    )
    return ranks.mean(axis=1)
