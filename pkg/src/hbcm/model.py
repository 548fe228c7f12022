"""Block covariance parameter systems.

A system assigns each of P features a community label in 1..K, a loading
lambda_j, and a noise variance sigma2_j; communities share a K x K factor
covariance omega. The population covariance has entries
lambda_j lambda_j' omega_{c_j c_j'} off the diagonal, plus sigma2_j on it.
This module assembles that matrix, validates identifiability requirements,
rescales systems to a canonical representative, and tests two systems for
observational equivalence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

__all__ = [
    "ValidationError",
    "ParameterSystem",
    "CovarianceMatrix",
    "CanonicalSystem",
    "EquivalenceWitness",
    "membership_matrix",
    "labels_from_membership",
    "assemble_covariance",
    "canonicalize",
    "systems_equivalent",
    "validate_condition1",
]

# Eigenvalues down to -PSD_RTOL * ||omega||_2 still count as nonnegative.
PSD_RTOL = 1e-10
# Community weight sums closer to zero than this cannot be canonicalized.
CANON_TOL = 1e-12


class ValidationError(ValueError):
    """A parameter system or matrix violates a structural requirement."""


def _readonly(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ParameterSystem:
    """One model instance: labels, loadings, noise variances, factor covariance.

    Parameters
    ----------
    p, k : int
        Feature count and community count.
    labels : array of int, shape (p,)
        Community indices, 1-based, values in 1..k.
    lam : array, shape (p,)
        Feature loadings.
    sigma2 : array, shape (p,)
        Feature noise variances.
    omega : array, shape (k, k)
        Factor covariance; stored exactly symmetric.
    pi : array, shape (k,), optional
        Community mixing weights. May be omitted for pure covariance work.

    Arrays are stored read-only, so instances are safe to share.
    """

    p: int
    k: int
    labels: np.ndarray
    lam: np.ndarray
    sigma2: np.ndarray
    omega: np.ndarray
    pi: Optional[np.ndarray] = None

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.dtype.kind not in "iu":
            rounded = np.rint(np.asarray(labels, dtype=float))
            if not np.array_equal(rounded, np.asarray(labels, dtype=float)):
                raise ValidationError("labels must be integers")
            labels = rounded
        object.__setattr__(self, "labels", _readonly(labels, dtype=np.int64))
        object.__setattr__(self, "lam", _readonly(self.lam))
        object.__setattr__(self, "sigma2", _readonly(self.sigma2))
        omega = np.array(self.omega, dtype=float)
        if omega.ndim != 2 or omega.shape != (self.k, self.k):
            raise ValidationError(f"omega must be {self.k} x {self.k}, got {omega.shape}")
        scale = np.max(np.abs(omega)) if omega.size else 0.0
        if np.max(np.abs(omega - omega.T)) > 1e-8 * max(scale, 1.0):
            raise ValidationError("omega is not symmetric")
        object.__setattr__(self, "omega", _readonly(0.5 * (omega + omega.T)))
        if self.pi is not None:
            object.__setattr__(self, "pi", _readonly(self.pi))
        for name in ("labels", "lam", "sigma2"):
            arr = getattr(self, name)
            if arr.shape != (self.p,):
                raise ValidationError(f"{name} must have length {self.p}, got {arr.shape}")
        if self.pi is not None and self.pi.shape != (self.k,):
            raise ValidationError(f"pi must have length {self.k}, got {self.pi.shape}")
        for name in ("lam", "sigma2", "omega"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(f"{name} contains non-finite values")
        if np.any(self.labels < 1) or np.any(self.labels > self.k):
            j = int(np.argmax((self.labels < 1) | (self.labels > self.k))) + 1
            raise ValidationError(f"label[{j}] outside 1..{self.k}")

    def to_json(self) -> str:
        obj = {
            "p": self.p,
            "k": self.k,
            "labels": self.labels.tolist(),
            "lambda": self.lam.tolist(),
            "sigma2": self.sigma2.tolist(),
            "omega": self.omega.tolist(),
            "pi": None if self.pi is None else self.pi.tolist(),
        }
        return json.dumps(obj, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ParameterSystem":
        obj = json.loads(text)
        return cls(
            p=int(obj["p"]),
            k=int(obj["k"]),
            labels=obj["labels"],
            lam=obj["lambda"],
            sigma2=obj["sigma2"],
            omega=obj["omega"],
            pi=obj.get("pi"),
        )


@dataclass(frozen=True)
class CovarianceMatrix:
    """Assembled P x P covariance; exactly symmetric."""

    sigma: np.ndarray

    @property
    def p(self) -> int:
        return self.sigma.shape[0]


@dataclass(frozen=True)
class CanonicalSystem:
    """Canonical representative of an equivalence class of systems.

    lambda_star and omega_star satisfy, for every community k,
    (1/P) sum_j' lambda_star_j' omega_star_{k, c_j'} = 1, which pins the
    loading/factor scale split. labels and sigma2 carry through unchanged.
    """

    lambda_star: np.ndarray
    omega_star: np.ndarray
    labels: np.ndarray
    sigma2: np.ndarray

    @property
    def p(self) -> int:
        return self.labels.shape[0]

    @property
    def k(self) -> int:
        return self.omega_star.shape[0]

    def as_system(self, pi: Optional[np.ndarray] = None) -> ParameterSystem:
        return ParameterSystem(
            p=self.p, k=self.k, labels=self.labels,
            lam=self.lambda_star, sigma2=self.sigma2, omega=self.omega_star, pi=pi,
        )


@dataclass(frozen=True)
class EquivalenceWitness:
    """Outcome of an equivalence test; truthy iff the systems are equivalent.

    When equivalent, q is the K x K label permutation matrix (second system's
    membership equals the first's times q) and d the per-community multiplier
    vector relating the loadings.
    """

    equivalent: bool
    q: Optional[np.ndarray] = None
    d: Optional[np.ndarray] = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.equivalent


def membership_matrix(labels, k: int) -> np.ndarray:
    """One-hot P x K membership matrix from 1-based labels."""
    labels = np.asarray(labels, dtype=np.int64)
    if np.any(labels < 1) or np.any(labels > k):
        raise ValidationError(f"labels must lie in 1..{k}")
    m = np.zeros((labels.shape[0], k))
    m[np.arange(labels.shape[0]), labels - 1] = 1.0
    return m


def labels_from_membership(m) -> np.ndarray:
    """Inverse of membership_matrix; rows must be one-hot."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or not np.array_equal(m, (m == 1.0).astype(float)) or \
            not np.all(m.sum(axis=1) == 1.0):
        raise ValidationError("membership rows must be one-hot")
    return np.argmax(m, axis=1).astype(np.int64) + 1


def _check_psd(omega: np.ndarray):
    w = np.linalg.eigvalsh(omega)
    norm = np.max(np.abs(w)) if w.size else 0.0
    if w.size and w[0] < -PSD_RTOL * max(norm, 1.0):
        raise ValidationError(f"omega is not positive semi-definite: eigenvalue {w[0]:.6g}")


def _check_lam_sigma(sys: ParameterSystem):
    zero = np.flatnonzero(sys.lam == 0.0)
    if zero.size:
        raise ValidationError(f"lambda[{zero[0] + 1}] is zero")
    bad = np.flatnonzero(sys.sigma2 <= 0.0)
    if bad.size:
        raise ValidationError(f"sigma2[{bad[0] + 1}] is not positive")


def _raw_assemble(lam: np.ndarray, block: np.ndarray, sigma2: np.ndarray) -> np.ndarray:
    # Shared with the perturbed generator so that the r = 0 case is bit-identical.
    sigma = np.outer(lam, lam) * block
    sigma[np.diag_indices(lam.shape[0])] += sigma2
    return 0.5 * (sigma + sigma.T)


def assemble_covariance(sys: ParameterSystem) -> CovarianceMatrix:
    """Assemble the P x P population covariance of a system.

    Requires nonzero loadings, positive noise variances, and a positive
    semi-definite omega; violations raise ValidationError naming the
    offending index or eigenvalue.
    """
    _check_lam_sigma(sys)
    _check_psd(sys.omega)
    c0 = sys.labels - 1
    block = sys.omega[np.ix_(c0, c0)]
    return CovarianceMatrix(sigma=_readonly(_raw_assemble(sys.lam, block, sys.sigma2)))


def canonicalize(sys: Union[ParameterSystem, CanonicalSystem]) -> CanonicalSystem:
    """Rescale loadings and factor covariance to the canonical representative.

    The result assembles to the same covariance and is a fixed point of this
    map. Fails if any feature's community weight sum
    sum_j' lambda_j' omega_{c_j' c_j} vanishes (within 1e-12).
    """
    if isinstance(sys, CanonicalSystem):
        sys = sys.as_system()
    mem = membership_matrix(sys.labels, sys.k)
    s = sys.omega @ (mem.T @ sys.lam)  # s_k = sum_j' lambda_j' omega_{k, c_j'}
    t = s[sys.labels - 1]
    small = np.flatnonzero(np.abs(t) <= CANON_TOL)
    if small.size:
        j = small[0] + 1
        raise ValidationError(f"community weight sum vanishes at feature {j}: {t[small[0]]:.3g}")
    lam_star = (t / sys.p) * sys.lam
    d = sys.p / s
    omega_star = d[:, None] * sys.omega * d[None, :]
    omega_star = 0.5 * (omega_star + omega_star.T)
    return CanonicalSystem(
        lambda_star=_readonly(lam_star),
        omega_star=_readonly(omega_star),
        labels=sys.labels,
        sigma2=sys.sigma2,
    )


def validate_condition1(sys: ParameterSystem) -> list:
    """Check the identifiability requirements; return a list of violations.

    Empty iff every loading is nonzero, omega is positive definite, every
    noise variance is positive, labels are valid, and every community has at
    least 3 members. Messages use 1-based indices.
    """
    out = []
    for j in np.flatnonzero(sys.lam == 0.0):
        out.append(f"lambda[{j + 1}] is zero")
    for j in np.flatnonzero(sys.sigma2 <= 0.0):
        out.append(f"sigma2[{j + 1}] is not positive")
    w = np.linalg.eigvalsh(sys.omega)
    norm = np.max(np.abs(w)) if w.size else 0.0
    if w.size and w[0] <= PSD_RTOL * max(norm, 1.0):
        out.append(f"omega is not positive definite: eigenvalue {w[0]:.6g}")
    counts = np.bincount(sys.labels, minlength=sys.k + 1)[1:]
    for k0 in np.flatnonzero(counts < 3):
        out.append(f"community {k0 + 1} has {counts[k0]} members (minimum 3)")
    return out


def systems_equivalent(a: ParameterSystem, b: ParameterSystem,
                       tol: float = 1e-8) -> EquivalenceWitness:
    """Decide whether two systems assemble to the same population covariance.

    Both inputs must satisfy the identifiability requirements. Equivalence
    holds iff there is a label permutation q and a nonzero multiplier vector
    d with omega_b = q^T diag(d) omega_a diag(d) q, membership_b =
    membership_a q, lam_b = lam_a / d[c_a], and identical sigma2.
    """
    for name, s in (("first", a), ("second", b)):
        viol = validate_condition1(s)
        if viol:
            raise ValidationError(f"{name} system fails identifiability: {viol[0]}")
    if a.p != b.p or a.k != b.k:
        return EquivalenceWitness(False, reason="dimension mismatch")
    if not np.allclose(a.sigma2, b.sigma2, rtol=tol, atol=tol):
        return EquivalenceWitness(False, reason="sigma2 differs")

    # The permutation, if any, is forced by the two label vectors.
    perm = np.full(a.k, -1, dtype=np.int64)
    for k0 in range(a.k):
        members = np.flatnonzero(a.labels == k0 + 1)
        targets = np.unique(b.labels[members])
        if targets.size != 1:
            return EquivalenceWitness(False, reason="label partitions differ")
        perm[k0] = targets[0] - 1
    if np.unique(perm).size != a.k:
        return EquivalenceWitness(False, reason="label map is not a bijection")

    ratio = a.lam / b.lam
    d = np.empty(a.k)
    for k0 in range(a.k):
        vals = ratio[a.labels == k0 + 1]
        if np.max(np.abs(vals - vals[0])) > tol * max(1.0, abs(vals[0])):
            return EquivalenceWitness(False, reason=f"loading ratios inconsistent in community {k0 + 1}")
        d[k0] = vals.mean()
    if np.any(d == 0.0) or not np.all(np.isfinite(d)):
        return EquivalenceWitness(False, reason="degenerate multiplier")

    q = np.zeros((a.k, a.k))
    q[np.arange(a.k), perm] = 1.0
    target = q.T @ (d[:, None] * a.omega * d[None, :]) @ q
    scale = max(1.0, np.max(np.abs(target)))
    if np.max(np.abs(b.omega - target)) > tol * scale:
        return EquivalenceWitness(False, reason="omega relation fails")
    return EquivalenceWitness(True, q=_readonly(q), d=_readonly(d))
