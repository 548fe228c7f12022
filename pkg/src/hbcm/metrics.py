"""Clustering agreement metrics and the moment loading estimator."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import ValidationError, _readonly, membership_matrix
from .simulate import as_matrix

__all__ = [
    "adjusted_rand_index",
    "SoftConfusion",
    "soft_confusion",
    "min_misclassification",
    "moment_lambda",
]

MAX_ASSIGNMENT_K = 10


def adjusted_rand_index(a, b) -> float:
    """Chance-adjusted pair-counting agreement between two hard labelings.

    Parameters
    ----------
    a, b : array of int, shape (p,)
        Label vectors over the same items; the label values themselves do
        not matter, only the induced partitions.

    Returns
    -------
    float
        1.0 for identical partitions, around 0 for independent ones; can be
        negative. Pair counts and the index itself are computed in exact
        rational arithmetic with a single rounding at the end, so the value
        is stable for item counts up to millions.
    """
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"label vectors differ in length: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise ValidationError("need at least 2 items")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    cont = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(cont, (ia, ib), 1)

    def comb2(v):
        v = v.astype(object)
        return int((v * (v - 1) // 2).sum())

    sum_cells = comb2(cont.ravel())
    sum_a = comb2(cont.sum(axis=1))
    sum_b = comb2(cont.sum(axis=0))
    total = int(a.size) * (int(a.size) - 1) // 2
    expected = Fraction(sum_a * sum_b, total)
    maximum = Fraction(sum_a + sum_b, 2)
    if maximum == expected:
        return 1.0
    return float((sum_cells - expected) / (maximum - expected))


@dataclass(frozen=True)
class SoftConfusion:
    """K x K overlap of two soft assignments; entries nonnegative, total 1."""

    r: np.ndarray

    @property
    def k(self) -> int:
        return self.r.shape[0]


def soft_confusion(q, q_tilde) -> SoftConfusion:
    """R_kk' = (1/P) sum_j q_jk qtilde_jk' for row-stochastic q, q_tilde."""
    q = np.asarray(q, dtype=float)
    q_tilde = np.asarray(q_tilde, dtype=float)
    if q.ndim != 2 or q_tilde.ndim != 2 or q.shape[0] != q_tilde.shape[0]:
        raise ValidationError(f"assignment shapes do not align: {q.shape} vs {q_tilde.shape}")
    return SoftConfusion(r=_readonly((q.T @ q_tilde) / q.shape[0]))


def min_misclassification(q, truth) -> float:
    """Smallest soft misclassification rate over relabelings of q's classes.

    Builds the soft confusion of q against the one-hot truth and maximizes
    the matched trace by optimal assignment. truth may use at most q's K
    classes; K above 10 is refused.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 2:
        raise ValidationError("q must be a P x K matrix")
    k = q.shape[1]
    if k > MAX_ASSIGNMENT_K:
        raise ValidationError(f"class matching refused for K = {k} > {MAX_ASSIGNMENT_K}")
    truth = np.asarray(truth, dtype=np.int64)
    if truth.shape != (q.shape[0],):
        raise ValidationError("truth must have one label per row of q")
    r = soft_confusion(q, membership_matrix(truth, k)).r
    rows, cols = linear_sum_assignment(-r)
    return float(1.0 - r[rows, cols].sum())


def moment_lambda(x) -> np.ndarray:
    """Row means of the uncentered second-moment matrix X^T X / N.

    Estimates the canonical loadings: lam_hat_j = sum_j' sum_i x_ij x_ij'
    / (P N), computed in O(NP) without forming the P x P matrix.
    """
    x = as_matrix(x)
    n, p = x.shape
    return x.T @ x.sum(axis=1) / (p * n)
