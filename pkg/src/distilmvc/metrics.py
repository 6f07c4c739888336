"""Clustering accuracy (best one-to-one matching), NMI and purity."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .pseudolabel import contingency, hungarian_align


@dataclass
class MetricsReport:
    acc: float
    nmi: float
    pur: float
    contingency: np.ndarray
    n: int

    def to_dict(self) -> dict[str, float | int]:
        return {"acc": self.acc, "nmi": self.nmi, "pur": self.pur, "n": self.n}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _table(pred, truth, k: int) -> np.ndarray:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ShapeError(f"pred has {pred.size} entries, truth has {truth.size}")
    return contingency(pred, truth, k)


def clustering_accuracy(pred, truth, k: int) -> float:
    table = _table(pred, truth, k)
    if table.sum() == 0:
        return 0.0
    perm = hungarian_align(table)
    return float(table[np.arange(k), perm].sum() / table.sum())


def purity(pred, truth, k: int) -> float:
    table = _table(pred, truth, k)
    if table.sum() == 0:
        return 0.0
    # empty predicted clusters contribute max(0,...)=0
    return float(table.max(axis=1).sum() / table.sum())


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(pred, truth, k: int) -> float:
    """Mutual information normalized by the arithmetic mean of the two entropies."""
    table = _table(pred, truth, k).astype(np.float64)
    n = table.sum()
    if n == 0:
        return 0.0
    h_pred = _entropy(table.sum(axis=1))
    h_truth = _entropy(table.sum(axis=0))
    if h_pred == 0.0 and h_truth == 0.0:
        # both partitions are a single block, hence identical
        return 1.0
    joint = table / n
    outer = np.outer(joint.sum(axis=1), joint.sum(axis=0))
    nz = joint > 0
    mi = float((joint[nz] * np.log(joint[nz] / outer[nz])).sum())
    if mi <= 0.0:
        return 0.0
    return float(min(1.0, mi / ((h_pred + h_truth) / 2)))


def evaluate(pred, truth, k: int) -> MetricsReport:
    return MetricsReport(
        acc=clustering_accuracy(pred, truth, k),
        nmi=nmi(pred, truth, k),
        pur=purity(pred, truth, k),
        contingency=_table(pred, truth, k),
        n=int(np.asarray(pred).size),
    )


def is_one_to_one(pred, truth, k: int) -> bool:
    """True when every predicted cluster is non-empty and the majority classes are all distinct."""
    table = _table(pred, truth, k)
    if (table.sum(axis=1) == 0).any():
        return False
    majority = table.argmax(axis=1)
    return len(set(majority.tolist())) == k
