"""Two-layer variational EM for block covariance clustering.

The posterior over labels and factors is approximated by a product
q1(c) q2(alpha): q1 factorizes over features into row-stochastic weights,
q2 over samples into a shared-covariance Gaussian. Each update below is the
exact coordinate-ascent maximizer of the objective

    J = E_q[log p(X, c, alpha)] + H(q1) + H(q2),

so J is non-decreasing along the fit loop. Labels come out of the final q1
by row argmax.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import xlogy

from .model import ValidationError, _readonly, membership_matrix
from .simulate import as_matrix
from .spectral import abs_correlation, spectral_cluster

__all__ = [
    "Params",
    "VariationalState",
    "FitOptions",
    "FitResult",
    "e_step_q2",
    "e_step_q1",
    "m_step",
    "elbo",
    "init_from_labels",
    "fit",
]

logger = logging.getLogger(__name__)

_LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class Params:
    """Model parameters Phi = {pi, omega, lam, sigma2}."""

    pi: np.ndarray
    omega: np.ndarray
    lam: np.ndarray
    sigma2: np.ndarray


@dataclass(frozen=True)
class VariationalState:
    """Variational posterior: q1 (P x K row-stochastic), q2 moments mu (N x K)
    and shared covariance v (K x K)."""

    q1: np.ndarray
    mu: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class FitOptions:
    """Knobs for the fit loop.

    elbo_rel_tol stops the loop when the objective's relative change falls
    below it; min_pi triggers the empty-cluster rescue. The initial q1 row
    puts mass u ~ Uniform(0, 0.5) on the entry picked by the initial labels,
    which leaves the posterior free to move off a poor initial partition;
    paper_literal_init=False switches to Uniform(0.5, 1), pinning rows to
    the initial labels more firmly.
    """

    max_iters: int = 500
    elbo_rel_tol: float = 1e-6
    min_pi: float = 1e-6
    sigma2_floor: float = 1e-8
    paper_literal_init: bool = True
    init_inner_iters: int = 5
    laplacian: str = "none"
    scaling: str = "sqrt"
    row_normalize: bool = False


@dataclass(frozen=True)
class FitResult:
    """Fit outcome: 1-based labels, parameters, objective trace, iteration
    count, convergence flag, and the final variational state."""

    labels: np.ndarray
    params: Params
    elbo_trace: np.ndarray
    iterations: int
    converged: bool
    state: VariationalState = field(repr=False, default=None)

    def to_json(self) -> str:
        return json.dumps({
            "labels": self.labels.tolist(),
            "pi": self.params.pi.tolist(),
            "omega": self.params.omega.tolist(),
            "lambda": self.params.lam.tolist(),
            "sigma2": self.params.sigma2.tolist(),
            "elbo_trace": self.elbo_trace.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
        }, indent=2)


def _spd_solve(a: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    try:
        return cho_solve(cho_factor(a), b)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"{what} is not positive definite") from exc


def _spd_logdet(a: np.ndarray, what: str) -> float:
    try:
        c, _ = cho_factor(a)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"{what} is not positive definite") from exc
    return 2.0 * float(np.log(np.diag(c)).sum())


def e_step_q2(x, q1: np.ndarray, phi: Params) -> Tuple[np.ndarray, np.ndarray]:
    """Factor posterior update.

    With A = omega^{-1} + sum_j (lam_j^2 / sigma2_j) diag(q1_j.), the shared
    covariance is v = A^{-1} and the posterior means solve
    A mu_i = B_i, B_ik = sum_j q1_jk lam_j x_ij / sigma2_j.
    """
    x = as_matrix(x)
    precision = phi.lam * phi.lam / phi.sigma2
    a = _spd_solve(phi.omega, np.eye(phi.omega.shape[0]), "omega")
    a = a + np.diag(q1.T @ precision)
    b = x @ (q1 * (phi.lam / phi.sigma2)[:, None])
    try:
        cho = cho_factor(a)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("posterior precision is singular") from exc
    v = cho_solve(cho, np.eye(a.shape[0]))
    v = 0.5 * (v + v.T)
    mu = cho_solve(cho, b.T).T
    return mu, v


def e_step_q1(x, mu: np.ndarray, v: np.ndarray, phi: Params) -> np.ndarray:
    """Label posterior update: row softmax of the per-community scores.

    Row-constant terms of log f_j(k) cancel in the softmax and are dropped;
    the max of each row is subtracted before exponentiation.
    """
    x = as_matrix(x)
    n = x.shape[0]
    xtm = x.T @ mu
    g = (mu * mu).sum(axis=0) + n * np.diag(v)
    scores = (phi.lam[:, None] * xtm - 0.5 * (phi.lam * phi.lam)[:, None] * g[None, :])
    scores = scores / phi.sigma2[:, None]
    scores = scores + np.log(np.maximum(phi.pi, _LOG_FLOOR))[None, :]
    scores -= scores.max(axis=1, keepdims=True)
    q1 = np.exp(scores)
    q1 /= q1.sum(axis=1, keepdims=True)
    return q1


def m_step(x, q1: np.ndarray, mu: np.ndarray, v: np.ndarray,
           sigma2_floor: float = 1e-8,
           prev_lam: Optional[np.ndarray] = None) -> Params:
    """Closed-form parameter maximizers given the variational posterior."""
    x = as_matrix(x)
    n = x.shape[0]
    omega = (mu.T @ mu) / n + v
    omega = 0.5 * (omega + omega.T)
    pi = q1.mean(axis=0)
    xtm = x.T @ mu
    g = (mu * mu).sum(axis=0) + n * np.diag(v)
    num = (q1 * xtm).sum(axis=1)
    den = q1 @ g
    degenerate = den <= 0
    if np.any(degenerate):
        logger.warning("lambda update degenerate for %d feature(s); keeping previous values",
                       int(degenerate.sum()))
        fallback = prev_lam if prev_lam is not None else np.ones(x.shape[1])
        lam = np.where(degenerate, fallback, num / np.where(degenerate, 1.0, den))
    else:
        lam = num / den
    csum = (x * x).sum(axis=0)
    sigma2 = (csum + lam * lam * den - 2.0 * lam * num) / n
    sigma2 = np.maximum(sigma2, sigma2_floor)
    return Params(pi=pi, omega=omega, lam=lam, sigma2=sigma2)


def elbo(x, q1: np.ndarray, mu: np.ndarray, v: np.ndarray, phi: Params) -> float:
    """Evaluate the variational objective J at (q1, q2, Phi).

    Includes both entropies and the Gaussian constant N K (1 + log 2 pi) / 2;
    0 log 0 is treated as 0. Raises if omega or v is not positive definite.
    """
    x = as_matrix(x)
    n, k = x.shape[0], q1.shape[1]
    logdet_omega = _spd_logdet(phi.omega, "omega")
    second = mu.T @ mu + n * v
    tr = float(np.trace(_spd_solve(phi.omega, second, "omega")))
    t_pi = float((q1 * np.log(np.maximum(phi.pi, _LOG_FLOOR))[None, :]).sum())
    t_factor = -0.5 * n * logdet_omega - 0.5 * tr
    xtm = x.T @ mu
    g = (mu * mu).sum(axis=0) + n * np.diag(v)
    num = (q1 * xtm).sum(axis=1)
    den = q1 @ g
    csum = (x * x).sum(axis=0)
    t_obs = float((-0.5 * n * np.log(phi.sigma2)
                   - (csum - 2.0 * phi.lam * num + phi.lam * phi.lam * den)
                   / (2.0 * phi.sigma2)).sum())
    t_ent1 = -float(xlogy(q1, q1).sum())
    t_ent2 = 0.5 * n * _spd_logdet(v, "posterior covariance") \
        + 0.5 * n * k * (1.0 + np.log(2.0 * np.pi))
    return t_pi + t_factor + t_obs + t_ent1 + t_ent2


def _pd_repair(omega: np.ndarray) -> np.ndarray:
    # Block-averaged starts can be indefinite; floor the spectrum.
    w, u = np.linalg.eigh(omega)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    floor = max(1e-8, 1e-3 * scale)
    w = np.maximum(w, floor)
    out = (u * w) @ u.T
    return 0.5 * (out + out.T)


def init_from_labels(x, labels0, k: int, opts: FitOptions = FitOptions(),
                     seed=None) -> Tuple[np.ndarray, Params]:
    """Starting point from hard labels.

    Each q1 row puts mass u on its label (u ~ Uniform(0, 0.5), or
    Uniform(0.5, 1) when paper_literal_init is off) and spreads the rest
    randomly.
    omega starts from block-averaged sample covariances, diagonal blocks
    excluding same-column pairs, repaired to positive definite; lam and
    sigma2 come from a few single-cluster update sweeps per community.
    """
    x = as_matrix(x)
    n, p = x.shape
    labels0 = np.asarray(labels0, dtype=np.int64)
    if labels0.shape != (p,):
        raise ValidationError(f"initial labels must have length {p}")
    present = np.unique(labels0)
    if present.size != k or present[0] < 1 or present[-1] > k:
        raise ValidationError(f"initial labels must use every class in 1..{k}")
    rng = np.random.default_rng(seed)

    lo, hi = (0.0, 0.5) if opts.paper_literal_init else (0.5, 1.0)
    u = rng.uniform(lo, hi, size=p)
    rest = rng.random((p, k - 1))
    rest *= ((1.0 - u) / rest.sum(axis=1))[:, None]
    q1 = np.empty((p, k))
    rows = np.arange(p)
    mask = np.ones((p, k), dtype=bool)
    mask[rows, labels0 - 1] = False
    q1[rows, labels0 - 1] = u
    q1[mask] = rest.ravel()
    pi0 = q1.mean(axis=0)

    mem = membership_matrix(labels0, k)
    counts = mem.sum(axis=0)
    proj = x @ mem                      # N x K community column sums
    block_sums = (proj.T @ proj) / n    # includes same-column products
    diag_ss = ((x * x).sum(axis=0) / n) @ mem
    pair_counts = np.outer(counts, counts)
    omega0 = block_sums / pair_counts
    for k0 in range(k):
        if counts[k0] > 1:
            omega0[k0, k0] = (block_sums[k0, k0] - diag_ss[k0]) / (counts[k0] * (counts[k0] - 1.0))
        else:
            omega0[k0, k0] = diag_ss[k0] / counts[k0]
    omega0 = _pd_repair(omega0)

    lam0 = np.empty(p)
    sigma20 = np.empty(p)
    for k0 in range(k):
        members = np.flatnonzero(labels0 == k0 + 1)
        cols = x[:, members]
        csum = (cols * cols).sum(axis=0)
        lam_c = np.ones(members.size)
        s2_c = np.maximum(csum / n, 1e-8)
        wkk = omega0[k0, k0]
        for _ in range(opts.init_inner_iters):
            a = 1.0 / wkk + float((lam_c * lam_c / s2_c).sum())
            vk = 1.0 / a
            mu1 = vk * (cols @ (lam_c / s2_c))
            gk = float((mu1 * mu1).sum()) + n * vk
            num = cols.T @ mu1
            lam_c = num / gk
            s2_c = np.maximum((csum + lam_c * lam_c * gk - 2.0 * lam_c * num) / n,
                              opts.sigma2_floor)
        lam0[members] = lam_c
        sigma20[members] = s2_c
    return q1, Params(pi=pi0, omega=omega0, lam=lam0, sigma2=sigma20)


def _rescue_empty(q1: np.ndarray, min_pi: float) -> np.ndarray:
    """Re-seed collapsed q1 columns by splitting the heaviest cluster.

    A starved column gets the least-confident half of the currently largest
    cluster's features, by swapping the two q1 entries of those rows. The
    swap keeps rows normalized and hands the dead cluster enough mass to
    survive the next parameter update; a tiny nudge cannot, because the
    following pi estimate starves the column right back.
    """
    p, k = q1.shape
    colsum = q1.sum(axis=0)
    weak = np.flatnonzero(colsum < min_pi * p)
    if not weak.size:
        return q1
    q1 = q1.copy()
    hard = np.argmax(q1, axis=1)
    moved = np.zeros(p, dtype=bool)
    for k0 in weak:
        counts = np.bincount(hard[~moved], minlength=k).astype(float)
        counts[weak] = -1.0  # never split another starved cluster
        k_big = int(np.argmax(counts))
        members = np.flatnonzero((hard == k_big) & ~moved)
        if members.size < 2:
            members = np.flatnonzero(~moved)
        order = members[np.argsort(q1[members, k_big])]
        rows = order[:max(3, members.size // 2)]
        swap = q1[rows, k_big].copy()
        q1[rows, k_big] = q1[rows, k0]
        q1[rows, k0] = swap
        moved[rows] = True
        logger.warning("rescued empty cluster %d with %d features from cluster %d",
                       k0 + 1, rows.size, k_big + 1)
    q1 /= q1.sum(axis=1, keepdims=True)
    return q1


def fit(x, k: int, opts: Optional[FitOptions] = None, init_labels=None,
        seed=None) -> FitResult:
    """Run the full estimation loop on an N x P data matrix.

    Columns are centered, initial labels come from spectral clustering unless
    given, and the loop alternates the q2, q1, and parameter updates until
    the objective's relative change drops below elbo_rel_tol or max_iters is
    hit. Final labels are the row argmax of q1, ties to the lowest index.

    Parameters
    ----------
    x : DataMatrix or array, shape (n, p)
    k : int
        Number of communities, at least 2.
    opts : FitOptions, optional
    init_labels : array of int, optional
        1-based starting labels covering every class; skips the spectral step.
    seed : int, optional
        Drives spectral restarts and the initial q1 draw.
    """
    x = as_matrix(x)
    if k < 2:
        raise ValidationError(f"k must be at least 2, got {k}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("data contains non-finite values")
    opts = opts or FitOptions()
    xc = x - x.mean(axis=0)

    ss = np.random.SeedSequence(seed)
    seed_spectral, seed_init = ss.spawn(2)
    if init_labels is None:
        init_labels = spectral_cluster(abs_correlation(xc), k, seed=seed_spectral,
                                       laplacian=opts.laplacian,
                                       scaling=opts.scaling,
                                       row_normalize=opts.row_normalize)
    q1, phi = init_from_labels(xc, init_labels, k, opts, seed=seed_init)

    trace = []
    converged = False
    mu = v = None
    for it in range(opts.max_iters):
        mu, v = e_step_q2(xc, q1, phi)
        q1 = e_step_q1(xc, mu, v, phi)
        q1 = _rescue_empty(q1, opts.min_pi)
        new_phi = m_step(xc, q1, mu, v, sigma2_floor=opts.sigma2_floor,
                         prev_lam=phi.lam)
        if it == 0:
            # The randomized q1 start makes the first alpha posterior mix
            # communities; re-estimating omega from it can lock that mixing
            # in. Hold omega at its initial estimate for one iteration (the
            # lam, sigma2, pi maximizers do not involve omega, so the
            # objective still cannot decrease).
            new_phi = Params(pi=new_phi.pi, omega=phi.omega, lam=new_phi.lam,
                             sigma2=new_phi.sigma2)
        phi = new_phi
        j = elbo(xc, q1, mu, v, phi)
        if not np.isfinite(j):
            raise RuntimeError(f"objective diverged at iteration {it + 1}: {j}")
        trace.append(j)
        if it > 0 and abs(j - trace[-2]) < opts.elbo_rel_tol * abs(trace[-2]):
            converged = True
            break
    labels = np.argmax(q1, axis=1).astype(np.int64) + 1
    return FitResult(
        labels=_readonly(labels, dtype=np.int64),
        params=phi,
        elbo_trace=np.asarray(trace),
        iterations=len(trace),
        converged=converged,
        state=VariationalState(q1=q1, mu=mu, v=v),
    )
