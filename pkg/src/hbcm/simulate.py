"""Synthetic data generation: model draws, heavy-tailed noise variants, the
rank-perturbed covariance, and the adversarial loading-tier construction."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .model import ParameterSystem, ValidationError, _raw_assemble, _readonly

__all__ = [
    "NoiseSpec",
    "DataMatrix",
    "GroundTruth",
    "as_matrix",
    "generate_labels",
    "generate_dataset",
    "table1_system",
    "perturbed_covariance",
    "perturbed_covariance_dataset",
    "misleading_lambda_system",
]

logger = logging.getLogger(__name__)

NOISE_KINDS = ("gaussian", "student_t", "student_t_standardized")


@dataclass(frozen=True)
class NoiseSpec:
    """Noise family for the additive errors.

    kind is one of "gaussian", "student_t", "student_t_standardized"; the t
    variants need dof > 2 so the variance exists. The standardized variant
    divides draws by sqrt(dof / (dof - 2)) to restore unit variance.
    """

    kind: str = "gaussian"
    dof: Optional[float] = None

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValidationError(f"unknown noise kind {self.kind!r}")
        if self.kind != "gaussian":
            if self.dof is None or not self.dof > 2:
                raise ValidationError("student t noise needs dof > 2")


@dataclass(frozen=True)
class DataMatrix:
    """N x P observation matrix, one row per sample."""

    x: np.ndarray
    n: int
    p: int

    @classmethod
    def from_array(cls, x) -> "DataMatrix":
        x = np.asarray(x, dtype=float)
        if x.ndim != 2:
            raise ValidationError(f"data must be 2-dimensional, got shape {x.shape}")
        if x.shape[0] < 2 or x.shape[1] < 2:
            raise ValidationError(f"data must be at least 2 x 2, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValidationError("data contains non-finite values")
        return cls(x=_readonly(x), n=x.shape[0], p=x.shape[1])

    def write_csv(self, path):
        np.savetxt(path, self.x, delimiter=",", fmt="%.17g")

    @classmethod
    def read_csv(cls, path) -> "DataMatrix":
        return cls.from_array(np.loadtxt(path, delimiter=",", ndmin=2))


@dataclass(frozen=True)
class GroundTruth:
    """Latent draws behind a synthetic dataset: labels, factors, and system."""

    labels: np.ndarray
    alpha: np.ndarray
    system: ParameterSystem

    def to_json(self) -> str:
        return json.dumps({
            "labels": self.labels.tolist(),
            "alpha": self.alpha.tolist(),
            "system": json.loads(self.system.to_json()),
        }, indent=2)


def as_matrix(x) -> np.ndarray:
    """Coerce a DataMatrix or array-like to a float64 2-d array."""
    if isinstance(x, DataMatrix):
        return x.x
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValidationError(f"expected a 2-d data matrix, got shape {x.shape}")
    return x


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def generate_labels(p: int, pi, seed=None) -> np.ndarray:
    """Draw P community labels i.i.d. from the weights pi; 1-based output.

    Boundary weights are allowed: a degenerate pi like (1, 0, 0) yields the
    constant label vector.
    """
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 1 or pi.size < 1:
        raise ValidationError("pi must be a nonempty vector")
    if np.any(pi < -1e-12) or np.any(pi > 1 + 1e-12) or abs(pi.sum() - 1.0) > 1e-9:
        raise ValidationError(f"pi is not a probability vector: {pi}")
    pi = np.clip(pi, 0.0, None)
    rng = _rng(seed)
    return rng.choice(pi.size, size=p, p=pi / pi.sum()).astype(np.int64) + 1


def _psd_factor(omega: np.ndarray) -> np.ndarray:
    # Symmetric factorization F with F F^T = omega; tiny negative eigenvalues
    # from roundoff are clipped to zero.
    w, u = np.linalg.eigh(omega)
    norm = np.max(np.abs(w)) if w.size else 0.0
    if w.size and w[0] < -1e-10 * max(norm, 1.0):
        raise ValidationError(f"covariance factor is not positive semi-definite: eigenvalue {w[0]:.6g}")
    return u * np.sqrt(np.clip(w, 0.0, None))


def _draw_noise(rng: np.random.Generator, shape, noise: NoiseSpec) -> np.ndarray:
    if noise.kind == "gaussian":
        return rng.standard_normal(shape)
    eps = rng.standard_t(noise.dof, size=shape)
    if noise.kind == "student_t_standardized":
        eps = eps / np.sqrt(noise.dof / (noise.dof - 2.0))
    return eps


def generate_dataset(n: int, sys: ParameterSystem,
                     noise: NoiseSpec = NoiseSpec(),
                     seed=None) -> Tuple[DataMatrix, GroundTruth]:
    """Draw N samples X_ij = lambda_j alpha_{i, c_j} + sigma_j eps_ij.

    Factors alpha_i are i.i.d. N(0, omega); eps follows the noise spec.
    Identical (seed, arguments) give bit-identical output. Returns the data
    and the latent ground truth.
    """
    if n < 2:
        raise ValidationError("need at least 2 samples")
    rng = _rng(seed)
    factor = _psd_factor(sys.omega)
    alpha = rng.standard_normal((n, sys.k)) @ factor.T
    eps = _draw_noise(rng, (n, sys.p), noise)
    x = alpha[:, sys.labels - 1] * sys.lam[None, :] + np.sqrt(sys.sigma2)[None, :] * eps
    data = DataMatrix.from_array(x)
    truth = GroundTruth(labels=sys.labels, alpha=_readonly(alpha), system=sys)
    return data, truth


def table1_system(n: int, p: int, k: int, seed=None) -> ParameterSystem:
    """Draw the benchmark grid's system: uniform labels, standard normal
    loadings, chi-square(2) + 1 noise variances, omega with unit diagonal
    and 0.5 off it.

    n is accepted for call-site symmetry with the data draw; the system
    itself does not depend on it.
    """
    rng = _rng(seed)
    omega = np.full((k, k), 0.5)
    np.fill_diagonal(omega, 1.0)
    pi = np.full(k, 1.0 / k)
    labels = generate_labels(p, pi, seed=rng)
    lam = rng.standard_normal(p)
    sigma2 = rng.chisquare(2, size=p) + 1.0
    return ParameterSystem(p=p, k=k, labels=labels, lam=lam, sigma2=sigma2,
                           omega=omega, pi=pi)


def perturbed_covariance(sys: ParameterSystem, r: float, num_spikes: int = 10,
                         seed=None) -> Tuple[np.ndarray, np.ndarray]:
    """Build Sigma~ = diag(lam) (Omega_blocks + r W) diag(lam) + diag(sigma2)
    with W a random rank-num_spikes perturbation, (1/sqrt(m)) sum z z^T.

    Returns (sigma_tilde, w). At r = 0 the result equals the unperturbed
    assembly exactly.
    """
    if r < 0:
        raise ValidationError("perturbation strength r must be nonnegative")
    rng = _rng(seed)
    z = rng.standard_normal((num_spikes, sys.p))
    w = (z.T @ z) / np.sqrt(num_spikes)
    w = 0.5 * (w + w.T)
    c0 = sys.labels - 1
    block = sys.omega[np.ix_(c0, c0)] + r * w
    return _raw_assemble(sys.lam, block, sys.sigma2), w


def perturbed_covariance_dataset(n: int, sys: ParameterSystem, r: float,
                                 num_spikes: int = 10, seed=None) -> DataMatrix:
    """Draw N rows from N(0, Sigma~) for the misspecification study.

    If the perturbed matrix loses positive definiteness it is jittered by
    1e-8 on the diagonal with a warning.
    """
    rng = _rng(seed)
    sigma_tilde, _ = perturbed_covariance(sys, r, num_spikes=num_spikes, seed=rng)
    wmin = np.linalg.eigvalsh(sigma_tilde)[0]
    if wmin <= 0:
        warnings.warn(f"perturbed covariance lost positive definiteness "
                      f"(eigenvalue {wmin:.3g}); jittering diagonal by 1e-8")
        sigma_tilde = sigma_tilde + 1e-8 * np.eye(sys.p)
    factor = _psd_factor(sigma_tilde)
    x = rng.standard_normal((n, sys.p)) @ factor.T
    return DataMatrix.from_array(x)


def misleading_lambda_system(seed=None, sigma: float = 1.0
                             ) -> Tuple[ParameterSystem, np.ndarray]:
    """Three communities whose loadings come in tiers 1 / 5 / 25 by column
    position, independent of the true labels.

    Returns the system and the tier grouping, a label vector that clustering
    methods driven by loading magnitude are drawn toward. sigma sets the
    common noise level.
    """
    p, k = 1000, 3
    sizes = (330, 330, 340)
    rng = _rng(seed)
    omega = np.full((k, k), 0.5)
    np.fill_diagonal(omega, 1.0)
    pi = np.full(k, 1.0 / k)
    labels = generate_labels(p, pi, seed=rng)
    lam = np.repeat([1.0, 5.0, 25.0], sizes)
    sigma2 = np.full(p, float(sigma) ** 2)
    sys = ParameterSystem(p=p, k=k, labels=labels, lam=lam, sigma2=sigma2,
                          omega=omega, pi=pi)
    mislead = np.repeat([1, 2, 3], sizes).astype(np.int64)
    return sys, mislead
