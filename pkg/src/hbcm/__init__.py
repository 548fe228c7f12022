"""Heterogeneous block covariance clustering.

Feature j carries a community label c_j, a loading lambda_j, and a noise
variance sigma2_j; communities share a K x K factor covariance. The package
assembles and canonicalizes such covariance structures, draws synthetic data
from them, recovers the labels with a two-layer variational EM initialized
by spectral clustering, selects K by split-half stability, and ships the
benchmark harness behind the `hbcm` command line tool.
"""

from .model import (CanonicalSystem, CovarianceMatrix, EquivalenceWitness,
                    ParameterSystem, ValidationError, assemble_covariance,
                    canonicalize, labels_from_membership, membership_matrix,
                    systems_equivalent, validate_condition1)
from .simulate import (DataMatrix, GroundTruth, NoiseSpec, as_matrix,
                       generate_dataset, generate_labels,
                       misleading_lambda_system, perturbed_covariance,
                       perturbed_covariance_dataset, table1_system)
from .spectral import KernelMatrix, abs_correlation, spectral_cluster, top_eigenpairs
from .vem import (FitOptions, FitResult, Params, VariationalState, e_step_q1,
                  e_step_q2, elbo, fit, init_from_labels, m_step)
from .metrics import (SoftConfusion, adjusted_rand_index, min_misclassification,
                      moment_lambda, soft_confusion)
from .bench import (BenchRow, CvReport, SweepRow, TABLE1_CELLS, bench_sweep,
                    bench_table1, rows_to_csv, select_k_cv, summarize,
                    summary_to_csv)

__version__ = "0.1.0"

__all__ = [
    "ParameterSystem", "CovarianceMatrix", "CanonicalSystem", "EquivalenceWitness",
    "ValidationError", "assemble_covariance", "canonicalize", "systems_equivalent",
    "validate_condition1", "membership_matrix", "labels_from_membership",
    "DataMatrix", "GroundTruth", "NoiseSpec", "as_matrix", "generate_labels",
    "generate_dataset", "table1_system", "perturbed_covariance",
    "perturbed_covariance_dataset", "misleading_lambda_system",
    "KernelMatrix", "abs_correlation", "top_eigenpairs", "spectral_cluster",
    "Params", "VariationalState", "FitOptions", "FitResult",
    "e_step_q2", "e_step_q1", "m_step", "elbo", "init_from_labels", "fit",
    "adjusted_rand_index", "SoftConfusion", "soft_confusion",
    "min_misclassification", "moment_lambda",
    "CvReport", "select_k_cv", "BenchRow", "SweepRow", "TABLE1_CELLS",
    "bench_table1", "bench_sweep", "rows_to_csv", "summarize", "summary_to_csv",
    "__version__",
]
