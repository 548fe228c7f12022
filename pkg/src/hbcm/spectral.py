"""Spectral clustering of features on the absolute sample correlation kernel.

Columns are embedded by the top-K eigenvectors of the kernel (optionally of
its symmetrically normalized variant), scaled by the square roots of the
matching eigenvalues, and clustered with restarted k-means. The scaled
embedding keeps each direction's weight, so features whose loadings dominate
the kernel also dominate the geometry the way they do in the reference
benchmarks; unit row normalization is available as a config switch and
discards that weight. All computations run on a value-sorted copy of the
embedding so that permuting the input columns permutes the labels.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .model import ValidationError, _readonly
from .simulate import as_matrix

__all__ = [
    "KernelMatrix",
    "abs_correlation",
    "top_eigenpairs",
    "spectral_cluster",
]

logger = logging.getLogger(__name__)

KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 300
MIN_COLUMN_VAR = 1e-12


@dataclass(frozen=True)
class KernelMatrix:
    """P x P affinity: absolute correlations, unit diagonal, entries in [0, 1]."""

    m: np.ndarray

    @property
    def p(self) -> int:
        return self.m.shape[0]


def abs_correlation(x) -> KernelMatrix:
    """Entrywise absolute Pearson correlation between columns.

    Columns are centered first; a column whose variance falls below 1e-12
    after centering raises ValidationError naming its 1-based index.
    """
    x = as_matrix(x)
    n = x.shape[0]
    xc = x - x.mean(axis=0)
    var = (xc * xc).sum(axis=0) / n
    bad = np.flatnonzero(var <= MIN_COLUMN_VAR)
    if bad.size:
        raise ValidationError(f"column {bad[0] + 1} is constant (variance {var[bad[0]]:.3g})")
    inv_norm = 1.0 / np.sqrt((xc * xc).sum(axis=0))
    c = (xc.T @ xc) * np.outer(inv_norm, inv_norm)
    c = 0.5 * (c + c.T)
    m = np.clip(np.abs(c), 0.0, 1.0)
    np.fill_diagonal(m, 1.0)
    return KernelMatrix(m=_readonly(m))


def top_eigenpairs(kernel: KernelMatrix, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Leading k eigenvalues (non-increasing) and eigenvectors of the kernel."""
    w, u = np.linalg.eigh(kernel.m)
    order = np.arange(w.size - 1, w.size - 1 - k, -1)
    return w[order], u[:, order]


def _sorted_view(y: np.ndarray) -> np.ndarray:
    # Lexicographic row order by value; ties between identical rows are harmless.
    keys = tuple(y[:, c] for c in range(y.shape[1] - 1, -1, -1))
    return np.lexsort(keys)


def _assign(y: np.ndarray, centers: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    d2 = ((y * y).sum(axis=1)[:, None] - 2.0 * y @ centers.T
          + (centers * centers).sum(axis=1)[None, :])
    labels = np.argmin(d2, axis=1)
    return labels, np.maximum(d2[np.arange(y.shape[0]), labels], 0.0)


def _seed_plusplus(y: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = y.shape[0]
    centers = np.empty((k, y.shape[1]))
    centers[0] = y[rng.integers(n)]
    d2 = ((y - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[i] = y[rng.integers(n)]
            continue
        cum = np.cumsum(d2)
        idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
        centers[i] = y[min(idx, n - 1)]
        d2 = np.minimum(d2, ((y - centers[i]) ** 2).sum(axis=1))
    return centers

def _seed_maximin(y: np.ndarray, k: int) -> np.ndarray:
    centers = np.empty((k, y.shape[1]))
    norms = (y * y).sum(axis=1)
    centers[0] = y[int(np.argmax(norms))]
    d2 = ((y - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        centers[i] = y[int(np.argmax(d2))]
        d2 = np.minimum(d2, ((y - centers[i]) ** 2).sum(axis=1))
    return centers


def _lloyd(y: np.ndarray, centers: np.ndarray, max_iter: int) -> Tuple[np.ndarray, float]:
    k = centers.shape[0]
    labels = np.full(y.shape[0], -1)
    for _ in range(max_iter):
        new_labels, d2 = _assign(y, centers)
        for k0 in range(k):
            mask = new_labels == k0
            if not np.any(mask):
                far = int(np.argmax(d2))  # resurrect empty cluster at the worst point
                centers[k0] = y[far]
                new_labels[far] = k0
                mask = new_labels == k0
                _, d2 = _assign(y, centers)
            centers[k0] = y[mask].mean(axis=0)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    labels, d2 = _assign(y, centers)
    return labels, float(d2.sum())


def _kmeans(y: np.ndarray, k: int, rng: np.random.Generator,
            restarts: int = KMEANS_RESTARTS,
            max_iter: int = KMEANS_MAX_ITER) -> np.ndarray:
    best_labels, best_inertia = None, np.inf
    for r in range(restarts):
        centers = _seed_maximin(y, k) if r == 0 else _seed_plusplus(y, k, rng)
        labels, inertia = _lloyd(y, centers.copy(), max_iter)
        if np.unique(labels).size < k:
            continue
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    if best_labels is None:
        raise ValidationError(f"k-means left a cluster empty in all {restarts} restarts")
    return best_labels


def spectral_cluster(kernel: KernelMatrix, k: int, seed=None,
                     laplacian: str = "none", scaling: str = "sqrt",
                     row_normalize: bool = False) -> np.ndarray:
    """Cluster the kernel's columns into k groups; returns 1-based labels.

    laplacian="none" embeds with eigenvectors of the kernel itself;
    "normalized" uses D^{-1/2} M D^{-1/2} first. scaling="sqrt" multiplies
    each eigenvector by the square root of its (nonnegative part of the)
    eigenvalue, so the embedding is the kernel's principal-component scores;
    "none" keeps raw eigenvectors. row_normalize=True rescales embedding rows
    to unit length before k-means. Requires 2 <= k <= P.
    """
    if isinstance(kernel, np.ndarray):
        kernel = KernelMatrix(m=kernel)
    if not 2 <= k <= kernel.p:
        raise ValidationError(f"k must be in 2..{kernel.p}, got {k}")
    if laplacian not in ("none", "normalized"):
        raise ValidationError(f"unknown laplacian mode {laplacian!r}")
    if scaling not in ("none", "sqrt"):
        raise ValidationError(f"unknown scaling mode {scaling!r}")
    # self-affinity carries no pairwise information; drop it like any graph
    # affinity. With a unit diagonal this only shifts eigenvalues by -1.
    m = kernel.m.copy()
    np.fill_diagonal(m, 0.0)
    if laplacian == "normalized":
        d = m.sum(axis=1)
        inv = 1.0 / np.sqrt(d)
        m = m * np.outer(inv, inv)
        m = 0.5 * (m + m.T)
    kernel = KernelMatrix(m=m)
    vals, vecs = top_eigenpairs(kernel, k)
    y = vecs
    # only weight by sqrt-eigenvalues while all K are positive; a zero weight
    # would collapse a coordinate and can leave k-means with duplicate rows
    if scaling == "sqrt" and vals[-1] > 0.0:
        y = y * np.sqrt(vals)
    if row_normalize:
        norms = np.sqrt((y * y).sum(axis=1))
        y = y / np.where(norms > 0, norms, 1.0)[:, None]

    order = _sorted_view(y)
    labels_sorted = _kmeans(y[order], k, np.random.default_rng(seed))
    labels = np.empty(kernel.p, dtype=np.int64)
    labels[order] = labels_sorted + 1
    return labels
