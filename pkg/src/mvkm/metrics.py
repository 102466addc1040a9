"""External clustering validation: NMI, ARI, ACC and pairwise precision/recall/F.

Everything is computed from the contingency table of the two labelings, so
cluster ids may be arbitrary integers (or any hashable values).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray  # rows: predicted clusters, columns: true classes

    @classmethod
    def from_labels(cls, pred, truth) -> "ContingencyTable":
        pred = np.asarray(pred)
        truth = np.asarray(truth)
        if pred.shape != truth.shape or pred.ndim != 1:
            raise ValueError(f"label arrays must be 1-D and equal length, got {pred.shape} and {truth.shape}")
        _, p_idx = np.unique(pred, return_inverse=True)
        _, t_idx = np.unique(truth, return_inverse=True)
        counts = np.zeros((p_idx.max() + 1 if p_idx.size else 0, t_idx.max() + 1 if t_idx.size else 0), dtype=np.int64)
        np.add.at(counts, (p_idx, t_idx), 1)
        return cls(counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def pred_sizes(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def true_sizes(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def _pairs(x) -> int:
    """Sum of C(x, 2) in exact integer arithmetic."""
    x = np.asarray(x, dtype=np.int64)
    return int((x * (x - 1) // 2).sum())


def _entropy(sizes: np.ndarray, n: int) -> float:
    p = sizes[sizes > 0] / n
    return float(-(p * np.log(p)).sum())


def _same_partition(table: ContingencyTable) -> bool:
    c = table.counts
    return bool(np.all((c > 0).sum(axis=0) == 1) and np.all((c > 0).sum(axis=1) == 1))


def nmi(pred, truth, normalization: str = "sqrt") -> float:
    """Mutual information over ``sqrt(H_pred H_truth)`` (or ``max`` of the two).

    Natural-log entropies.  When a normalizer is zero the score is 1 if both
    labelings are single-cluster and 0 otherwise.
    """
    table = ContingencyTable.from_labels(pred, truth)
    n = table.n
    if n == 0:
        return 1.0
    h_pred = _entropy(table.pred_sizes, n)
    h_true = _entropy(table.true_sizes, n)
    if normalization == "sqrt":
        denom = math.sqrt(h_pred * h_true)
    elif normalization == "max":
        denom = max(h_pred, h_true)
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    if denom == 0:
        both_single = table.counts.shape[0] == 1 and table.counts.shape[1] == 1
        return 1.0 if both_single else 0.0
    if _same_partition(table):
        return 1.0
    a = table.pred_sizes
    b = table.true_sizes
    mi = 0.0
    for i, j in zip(*np.nonzero(table.counts)):
        nij = table.counts[i, j]
        mi += nij / n * math.log(n * nij / (a[i] * b[j]))
    return float(min(1.0, max(0.0, mi / denom)))


def ari(pred, truth) -> float:
    """Hubert-Arabie adjusted Rand index from pair counts."""
    table = ContingencyTable.from_labels(pred, truth)
    n = table.n
    total = n * (n - 1) // 2
    if total == 0:
        return 1.0
    index = _pairs(table.counts)
    sum_a = _pairs(table.pred_sizes)
    sum_b = _pairs(table.true_sizes)
    expected = sum_a * sum_b / total
    max_index = (sum_a + sum_b) / 2
    denom = max_index - expected
    if denom == 0:
        return 1.0 if _same_partition(table) else 0.0
    return float((index - expected) / denom)


def acc(pred, truth) -> float:
    """Best one-to-one matching accuracy (Hungarian assignment on the contingency table)."""
    table = ContingencyTable.from_labels(pred, truth)
    if table.n == 0:
        return 1.0
    rows, cols = linear_sum_assignment(table.counts, maximize=True)
    return float(table.counts[rows, cols].sum() / table.n)


def pair_counts(pred, truth) -> tuple[int, int, int]:
    """(TP, FP, FN) over unordered sample pairs."""
    table = ContingencyTable.from_labels(pred, truth)
    tp = _pairs(table.counts)
    fp = _pairs(table.pred_sizes) - tp
    fn = _pairs(table.true_sizes) - tp
    return tp, fp, fn


def prf_from_counts(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return recall, precision, f


def pairwise_prf(pred, truth) -> tuple[float, float, float]:
    """Pair-counting (recall, precision, F-score).

    A pair is positive when its two samples share a cluster.  Precision (or
    recall) is 1 when there are no predicted (or true) positive pairs.
    """
    return prf_from_counts(*pair_counts(pred, truth))


METRIC_NAMES = ("nmi", "ari", "acc", "recall", "precision", "f_score")


@dataclass(frozen=True)
class MetricReport:
    nmi: float
    ari: float
    acc: float
    recall: float
    precision: float
    f_score: float

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_row(self) -> list[str]:
        return [repr(float(getattr(self, k))) for k in METRIC_NAMES]


def evaluate(pred, truth) -> MetricReport:
    recall, precision, f = pairwise_prf(pred, truth)
    return MetricReport(
        nmi=nmi(pred, truth),
        ari=ari(pred, truth),
        acc=acc(pred, truth),
        recall=recall,
        precision=precision,
        f_score=f,
    )
