"""Experiment harness: cross-validated choice of K, the reference benchmark
grid, and the parameter sweeps. Emits per-replicate rows and summaries whose
CSV bytes are reproducible from (configuration, master seed)."""

from __future__ import annotations

import csv
import json
import logging
import time
import warnings
import zlib
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .metrics import adjusted_rand_index
from .model import ParameterSystem, ValidationError, _readonly
from .simulate import (DataMatrix, NoiseSpec, as_matrix, generate_dataset,
                       generate_labels, misleading_lambda_system,
                       perturbed_covariance_dataset, table1_system)
from .spectral import abs_correlation, spectral_cluster
from .vem import FitOptions, fit

__all__ = [
    "CvReport",
    "select_k_cv",
    "BenchRow",
    "SweepRow",
    "TABLE1_CELLS",
    "SWEEP_NAMES",
    "bench_table1",
    "bench_sweep",
    "rows_to_csv",
    "summarize",
    "summary_to_csv",
]

logger = logging.getLogger(__name__)

TABLE1_CELLS = tuple((n, p, k)
                     for n, ps in ((500, (300, 500, 1000)), (1000, (500, 1000, 1500)))
                     for p in ps for k in (3, 5, 7))

SWEEP_NAMES = ("sigma", "omega_offdiag", "t_dof", "t_dof_standardized",
               "mislead", "misspec")


def _derive_seed(master, *parts) -> int:
    tag = ":".join(str(p) for p in parts).encode()
    return (int(master or 0) ^ zlib.crc32(tag)) & 0xFFFFFFFF


@dataclass(frozen=True)
class CvReport:
    """Split-half stability scores per candidate K.

    mean_ari holds the column means of per_split_ari with failed splits
    (NaN) excluded; best_k is the argmax, ties to the smallest K.
    """

    k_values: Tuple[int, ...]
    mean_ari: np.ndarray
    best_k: int
    per_split_ari: np.ndarray

    def to_json(self) -> str:
        return json.dumps({
            "k_values": list(self.k_values),
            "mean_ari": [None if np.isnan(v) else v for v in self.mean_ari.tolist()],
            "best_k": self.best_k,
            "per_split_ari": [[None if np.isnan(v) else v for v in row]
                              for row in self.per_split_ari.tolist()],
        }, indent=2)


def _method_labels(method: str, x: np.ndarray, k: int, seed, opts) -> np.ndarray:
    if method == "spectral":
        return spectral_cluster(abs_correlation(x), k, seed=seed)
    if method == "hbcm":
        return fit(x, k, opts=opts, seed=seed).labels
    raise ValidationError(f"unknown method {method!r}")


def select_k_cv(x, k_candidates: Sequence[int], m_splits: int,
                method: str = "hbcm", seed=None,
                opts: Optional[FitOptions] = None) -> CvReport:
    """Pick K by agreement of labels fitted on random half-splits of the rows.

    For each candidate K and each of m_splits rounds the rows are split into
    halves (floor/ceil for odd N), the method is fitted on both, and the
    adjusted Rand index between the two label vectors is recorded. A split
    where fitting fails contributes NaN and is excluded from the mean.
    """
    x = as_matrix(x)
    n = x.shape[0]
    k_candidates = [int(k) for k in k_candidates]
    if any(k < 2 for k in k_candidates):
        raise ValidationError("every candidate K must be at least 2")
    if n < 4:
        raise ValidationError("need at least 4 rows to split")
    if m_splits < 1:
        raise ValidationError("need at least one split")

    per_split = np.full((m_splits, len(k_candidates)), np.nan)
    for ki, k in enumerate(k_candidates):
        for m in range(m_splits):
            s_split = _derive_seed(seed, "cv", k, m, "split")
            rng = np.random.default_rng(s_split)
            perm = rng.permutation(n)
            half1, half2 = perm[: n // 2], perm[n // 2:]
            try:
                la = _method_labels(method, x[half1], k,
                                    _derive_seed(seed, "cv", k, m, "a"), opts)
                lb = _method_labels(method, x[half2], k,
                                    _derive_seed(seed, "cv", k, m, "b"), opts)
                per_split[m, ki] = adjusted_rand_index(la, lb)
            except (np.linalg.LinAlgError, ValidationError, RuntimeError) as exc:
                warnings.warn(f"cv split failed for K={k}, split {m}: {exc}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns
        mean = np.nanmean(per_split, axis=0)
    best_k = None
    best_val = -np.inf
    for ki, k in enumerate(k_candidates):
        v = mean[ki]
        if np.isnan(v):
            continue
        if v > best_val or (v == best_val and (best_k is None or k < best_k)):
            best_k, best_val = k, v
    if best_k is None:
        raise RuntimeError("every cross-validation cell failed")
    return CvReport(k_values=tuple(k_candidates), mean_ari=_readonly(mean),
                    best_k=int(best_k), per_split_ari=_readonly(per_split))


@dataclass(frozen=True)
class BenchRow:
    """One replicate of one method on one benchmark cell. wall_ms is kept in
    memory only; emitted CSVs exclude it so bytes depend only on seeds."""

    scenario: str
    n: int
    p: int
    k: int
    method: str
    rep: int
    seed: int
    ari: float
    iterations: int
    wall_ms: float


@dataclass(frozen=True)
class SweepRow:
    """One replicate at one sweep grid point. ari is against the true labels;
    ari_alt is against the misleading tier labels where that applies."""

    sweep: str
    n: int
    p: int
    k: int
    value: float
    method: str
    rep: int
    seed: int
    ari: float
    ari_alt: Optional[float]
    iterations: int


def _fit_pair(x: DataMatrix, k: int, seed: int, opts) -> Tuple[np.ndarray, np.ndarray, int, float, float]:
    """Spectral labels, then the model fit initialized from them."""
    t0 = time.perf_counter()
    labels_s = spectral_cluster(abs_correlation(x), k, seed=_derive_seed(seed, "spec"))
    t1 = time.perf_counter()
    res = fit(x, k, opts=opts, init_labels=labels_s, seed=_derive_seed(seed, "fit"))
    t2 = time.perf_counter()
    return labels_s, res.labels, res.iterations, (t1 - t0) * 1e3, (t2 - t1) * 1e3


def bench_table1(cells: Sequence[Tuple[int, int, int]] = TABLE1_CELLS,
                 reps: int = 30, seed=None,
                 opts: Optional[FitOptions] = None) -> List[BenchRow]:
    """Run spectral and the model fit over the benchmark grid.

    Each replicate draws a fresh system and dataset from a seed derived from
    (cell, replicate); the fit is initialized from the spectral labels, which
    are scored as their own method.
    """
    rows = []
    for (n, p, k) in cells:
        scen = f"N{n}_P{p}_K{k}"
        for rep in range(reps):
            s = _derive_seed(seed, scen, rep)
            sys = table1_system(n, p, k, seed=_derive_seed(s, "sys"))
            data, truth = generate_dataset(n, sys, NoiseSpec(), seed=_derive_seed(s, "data"))
            labels_s, labels_h, iters, ms_s, ms_h = _fit_pair(data, k, s, opts)
            rows.append(BenchRow(scen, n, p, k, "spectral", rep, s,
                                 adjusted_rand_index(labels_s, truth.labels), 0, ms_s))
            rows.append(BenchRow(scen, n, p, k, "hbcm", rep, s,
                                 adjusted_rand_index(labels_h, truth.labels), iters, ms_h))
        logger.info("cell %s done (%d reps)", scen, reps)
    return rows


def _uniform_block_system(p: int, k: int, lam: float, sigma: float,
                          offdiag: float, seed) -> ParameterSystem:
    omega = np.full((k, k), offdiag)
    np.fill_diagonal(omega, 1.0)
    pi = np.full(k, 1.0 / k)
    labels = generate_labels(p, pi, seed=seed)
    return ParameterSystem(p=p, k=k, labels=labels,
                           lam=np.full(p, lam), sigma2=np.full(p, sigma ** 2),
                           omega=omega, pi=pi)


_DEFAULT_GRIDS = {
    "sigma": tuple(float(s) for s in range(1, 11)),
    "omega_offdiag": tuple(round(0.1 * i, 1) for i in range(1, 10)),
    "t_dof": (3.0, 5.0, 10.0, 20.0, np.inf),
    "t_dof_standardized": (3.0, 5.0, 10.0, 20.0, np.inf),
    "mislead": (2.0, 4.0, 6.0, 8.0, 10.0),
    "misspec": (0.0, 0.1, 0.2, 0.3, 0.4, 0.5),
}


def bench_sweep(name: str, reps: int = 10, seed=None,
                n: int = 1000, p: int = 1000, k: int = 3,
                grid: Optional[Sequence[float]] = None,
                opts: Optional[FitOptions] = None) -> List[SweepRow]:
    """Run one named sweep; see SWEEP_NAMES for the choices.

    sigma: constant unit loadings, noise level swept.
    omega_offdiag: between-community factor covariance swept at sigma 6.
    t_dof / t_dof_standardized: heavy-tailed noise by degrees of freedom,
        with inf standing for the Gaussian reference.
    mislead: loading tiers uncorrelated with the truth, noise level swept;
        rows carry the agreement with the tier labels in ari_alt.
    misspec: rank-10 covariance perturbation strength swept.
    """
    if name not in SWEEP_NAMES:
        raise ValidationError(f"unknown sweep {name!r}; choose from {SWEEP_NAMES}")
    grid = tuple(float(v) for v in (grid if grid is not None else _DEFAULT_GRIDS[name]))
    rows = []
    for value in grid:
        for rep in range(reps):
            s = _derive_seed(seed, name, value, rep)
            alt = None
            if name == "sigma":
                sys = _uniform_block_system(p, k, 1.0, value, 0.5, _derive_seed(s, "sys"))
                data, truth_labels = _draw(sys, n, NoiseSpec(), s)
            elif name == "omega_offdiag":
                sys = _uniform_block_system(p, k, 1.0, 6.0, value, _derive_seed(s, "sys"))
                data, truth_labels = _draw(sys, n, NoiseSpec(), s)
            elif name in ("t_dof", "t_dof_standardized"):
                # One system per replicate, shared across the dof grid, so the
                # Gaussian reference point differs only in the noise draw.
                sys = table1_system(n, p, k, seed=_derive_seed(seed, name, "sys", rep))
                if np.isinf(value):
                    noise = NoiseSpec()
                elif name == "t_dof":
                    noise = NoiseSpec("student_t", dof=value)
                else:
                    noise = NoiseSpec("student_t_standardized", dof=value)
                data, truth_labels = _draw(sys, n, noise, s)
            elif name == "mislead":
                sys, mislead = misleading_lambda_system(_derive_seed(s, "sys"), sigma=value)
                data, truth_labels = _draw(sys, n, NoiseSpec(), s)
                alt = mislead
            else:  # misspec
                sys = _uniform_block_system(p, k, 1.0, 6.0, 0.5, _derive_seed(s, "sys"))
                data = perturbed_covariance_dataset(n, sys, value, seed=_derive_seed(s, "data"))
                truth_labels = sys.labels
            labels_s, labels_h, iters, _, _ = _fit_pair(data, sys.k, s, opts)
            for method, labels, its in (("spectral", labels_s, 0), ("hbcm", labels_h, iters)):
                rows.append(SweepRow(
                    sweep=name, n=data.n, p=sys.p, k=sys.k, value=value,
                    method=method, rep=rep, seed=s,
                    ari=adjusted_rand_index(labels, truth_labels),
                    ari_alt=None if alt is None else adjusted_rand_index(labels, alt),
                    iterations=its))
        logger.info("sweep %s value %s done (%d reps)", name, value, reps)
    return rows


def _draw(sys: ParameterSystem, n: int, noise: NoiseSpec, seed):
    data, truth = generate_dataset(n, sys, noise, seed=_derive_seed(seed, "data"))
    return data, truth.labels


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def rows_to_csv(rows, path):
    """Write replicate rows; columns are the dataclass fields minus wall_ms."""
    if not rows:
        raise ValidationError("no rows to write")
    fields = [f for f in rows[0].__dataclass_fields__ if f != "wall_ms"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(getattr(row, f)) for f in fields])


def summarize(rows) -> List[dict]:
    """Mean and standard deviation of ari per (scenario or grid point, method)."""
    groups = {}
    for row in rows:
        key = (getattr(row, "scenario", None) or f"{row.sweep}={_fmt(row.value)}",
               row.n, row.p, row.k, row.method)
        groups.setdefault(key, []).append(row.ari)
    out = []
    for key in sorted(groups, key=str):
        vals = np.asarray(groups[key])
        out.append({
            "scenario": key[0], "n": key[1], "p": key[2], "k": key[3],
            "method": key[4], "reps": vals.size,
            "mean_ari": float(vals.mean()),
            "sd_ari": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
        })
    return out


def summary_to_csv(summary, path):
    if not summary:
        raise ValidationError("no summary to write")
    fields = list(summary[0])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in summary:
            writer.writerow([_fmt(row[f]) for f in fields])
