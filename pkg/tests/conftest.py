"""Shared synthetic-system builders for the test suite.

Two random families: a loose one that exercises estimator numerics on
awkward inputs, and a well-separated one whose fits stay clear of the
empty-cluster guard, so objective traces are pure ascent paths.
"""

import itertools
import math

import numpy as np

from hbcm.model import ParameterSystem


def weak_random_system(rng, p, k):
    """Valid but loosely separated: small loadings allowed, factor
    covariance only mildly regularized. Clustering is hard here on
    purpose; use it for estimator oracles, not for recovery claims."""
    labels = np.concatenate([np.repeat(np.arange(1, k + 1), 3),
                             rng.integers(1, k + 1, size=p - 3 * k)])
    rng.shuffle(labels)
    lam = rng.normal(size=p)
    lam = np.where(np.abs(lam) < 0.2, np.sign(lam + 1e-12) * 0.2, lam)
    sigma2 = rng.uniform(0.5, 3.0, size=p)
    a = rng.normal(size=(k, k))
    omega = a @ a.T / k + 0.5 * np.eye(k)
    pi = rng.uniform(0.5, 1.5, size=k)
    pi /= pi.sum()
    return ParameterSystem(p=p, k=k, labels=labels, lam=lam, sigma2=sigma2,
                           omega=0.5 * (omega + omega.T), pi=pi)


def separated_random_system(rng, p, k):
    """Balanced communities, loadings bounded away from zero, diagonally
    dominant equicorrelated factor covariance."""
    base = np.repeat(np.arange(1, k + 1), p // k)
    extra = rng.integers(1, k + 1, size=p - base.size)
    labels = np.concatenate([base, extra])
    rng.shuffle(labels)
    sign = rng.choice([-1.0, 1.0], size=p)
    lam = sign * rng.uniform(0.8, 1.5, size=p)
    sigma2 = rng.uniform(0.5, 2.0, size=p)
    off = rng.uniform(0.1, 0.2)
    omega = np.full((k, k), off) + (1.0 - off) * np.eye(k)
    pi = rng.uniform(0.8, 1.2, size=k)
    pi /= pi.sum()
    return ParameterSystem(p=p, k=k, labels=labels, lam=lam, sigma2=sigma2,
                           omega=omega, pi=pi)


def brute_elbo(x, q1, mu, v, phi):
    """Objective by explicit enumeration of every label vector.

    Only feasible for tiny instances (K^P terms). Matches the production
    evaluation's constant convention: the 2 pi constants of the label prior
    and the observations are dropped, the factor posterior entropy keeps its
    full Gaussian constant.
    """
    n, p = x.shape
    k = q1.shape[1]
    jval = -0.5 * n * math.log(np.linalg.det(phi.omega))
    iw = np.linalg.inv(phi.omega)
    for i in range(n):
        m2 = np.outer(mu[i], mu[i]) + v
        jval += -0.5 * float(np.trace(iw @ m2))
    for cvec in itertools.product(range(k), repeat=p):
        w = 1.0
        for j, c in enumerate(cvec):
            w *= q1[j, c]
        if w == 0.0:
            continue
        term = 0.0
        for j, c in enumerate(cvec):
            term += math.log(phi.pi[c])
            for i in range(n):
                ea = mu[i, c]
                ea2 = mu[i, c] ** 2 + v[c, c]
                term += -0.5 * math.log(phi.sigma2[j]) \
                    - (x[i, j] ** 2 - 2 * x[i, j] * phi.lam[j] * ea
                       + phi.lam[j] ** 2 * ea2) / (2 * phi.sigma2[j])
        term += -math.log(w)
        jval += w * term
    jval += 0.5 * n * math.log(np.linalg.det(v)) \
        + 0.5 * n * k * (1 + math.log(2 * math.pi))
    return jval
