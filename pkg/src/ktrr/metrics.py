"""Clustering accuracy, normalized mutual information and purity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import LengthMismatch


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    nmi: float
    purity: float

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "nmi": self.nmi, "purity": self.purity}


def contingency(truth, pred) -> np.ndarray:
    """Counts ``C[i, j]`` of samples with the i-th true and j-th predicted label."""
    truth = np.asarray(truth).ravel()
    pred = np.asarray(pred).ravel()
    if truth.shape != pred.shape:
        raise LengthMismatch(f"{truth.size} true labels vs {pred.size} predicted")
    if truth.size == 0:
        raise LengthMismatch("empty label sequences")
    _, ti = np.unique(truth, return_inverse=True)
    _, pi = np.unique(pred, return_inverse=True)
    C = np.zeros((ti.max() + 1, pi.max() + 1), dtype=np.int64)
    np.add.at(C, (ti, pi), 1)
    return C


def accuracy(truth, pred) -> float:
    """Fraction matched under the best one-to-one map between label sets."""
    C = contingency(truth, pred)
    rows, cols = linear_sum_assignment(C, maximize=True)
    return float(C[rows, cols].sum() / C.sum())


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(truth, pred) -> float:
    """``I(T; P) / sqrt(H(T) H(P))`` with natural logarithms.

    If either partition has zero entropy the score is 1 when both do (both
    are a single cluster) and 0 otherwise.
    """
    C = contingency(truth, pred)
    n = C.sum()
    ht = _entropy(C.sum(axis=1), n)
    hp = _entropy(C.sum(axis=0), n)
    if ht == 0.0 or hp == 0.0:
        return 1.0 if ht == hp else 0.0
    nz = C > 0
    pij = C[nz] / n
    pi = C.sum(axis=1, keepdims=True) / n
    pj = C.sum(axis=0, keepdims=True) / n
    mi = float((pij * np.log(pij / (pi @ pj)[nz])).sum())
    return float(np.clip(mi / np.sqrt(ht * hp), 0.0, 1.0))


def purity(truth, pred) -> float:
    C = contingency(truth, pred)
    return float(C.max(axis=0).sum() / C.sum())


def evaluate(truth, pred) -> MetricReport:
    return MetricReport(accuracy(truth, pred), nmi(truth, pred), purity(truth, pred))
