"""Augmented GMM estimation with human, proxy and synthetic data."""

from ._errors import (
    ConvergenceWarning,
    DegenerateMomentsError,
    DomainError,
    IdentificationError,
    ParseError,
    SchemaError,
    StructuralError,
    SynthGMMError,
    UsageError,
)
from .augmented import AugmentedSystem, PackedParameters, build_augmented_moments, sample_mean_moments
from .baselines import (
    BaselineEstimate,
    PpiConfig,
    human_only_estimate,
    ppi_estimate,
    reppi_estimate,
    select_alpha_crossfit,
)
from .data import Dataset, ObservationRecord
from .dataio import parse_dataset_csv, write_dataset_csv
from .estimators import METHODS, AugmentedGMM, CrossFitPPI, HumanOnly, PPIPlusPlus, RePPI, fit_method
from .gmm import GmmEstimate, SolverConfig, two_step_estimate
from .inference import (
    ConfidenceInterval,
    efficient_covariance,
    partitioned_theta_variance,
    sandwich_covariance,
)
from .moments import MomentModel
from .simulation import (
    DgpConfig,
    StudyConfig,
    effective_sample_size,
    fidelity_sweep,
    generate_dgp_sample,
    monte_carlo_study,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentedGMM",
    "AugmentedSystem",
    "BaselineEstimate",
    "ConfidenceInterval",
    "ConvergenceWarning",
    "CrossFitPPI",
    "Dataset",
    "DegenerateMomentsError",
    "DgpConfig",
    "DomainError",
    "GmmEstimate",
    "HumanOnly",
    "IdentificationError",
    "METHODS",
    "MomentModel",
    "ObservationRecord",
    "PPIPlusPlus",
    "PackedParameters",
    "ParseError",
    "PpiConfig",
    "RePPI",
    "SchemaError",
    "SolverConfig",
    "StructuralError",
    "StudyConfig",
    "SynthGMMError",
    "UsageError",
    "build_augmented_moments",
    "effective_sample_size",
    "efficient_covariance",
    "fidelity_sweep",
    "fit_method",
    "generate_dgp_sample",
    "human_only_estimate",
    "monte_carlo_study",
    "parse_dataset_csv",
    "partitioned_theta_variance",
    "ppi_estimate",
    "reppi_estimate",
    "sample_mean_moments",
    "sandwich_covariance",
    "select_alpha_crossfit",
    "two_step_estimate",
    "write_dataset_csv",
]
