"""Block-penalized conditional logistic regression for matched case-control data."""

__version__ = "0.1.0"

from .data import MatchedDataset, Stratum, ValidationReport, matched_from_pairs, validate
from .exceptions import (
    BlockClrError,
    ConvergenceError,
    DataValidationError,
    InvalidArgumentError,
    NoSignalError,
    NumericalError,
)
from .likelihood import gradient, hessian, neg_log_likelihood
from .solver import (
    FitResult,
    PenaltySpec,
    SolverOptions,
    fit_penalized,
    kkt_check,
    lambda_max,
    penalty_value,
)
from .stability import (
    StabilityConfig,
    StabilityResult,
    draw_complementary_pairs,
    select,
    stable_clr_g,
)
from .tuning import CvPlan, cv_deviance, default_pf, find_default_lambda, make_cv_plan
from ._backend import kernels as _kernels

BACKEND = _kernels.name

__all__ = [
    "BACKEND",
    "BlockClrError",
    "ConvergenceError",
    "CvPlan",
    "DataValidationError",
    "FitResult",
    "InvalidArgumentError",
    "MatchedDataset",
    "NoSignalError",
    "NumericalError",
    "PenaltySpec",
    "SolverOptions",
    "StabilityConfig",
    "StabilityResult",
    "Stratum",
    "ValidationReport",
    "cv_deviance",
    "default_pf",
    "draw_complementary_pairs",
    "find_default_lambda",
    "fit_penalized",
    "gradient",
    "hessian",
    "kkt_check",
    "lambda_max",
    "make_cv_plan",
    "matched_from_pairs",
    "neg_log_likelihood",
    "penalty_value",
    "select",
    "stable_clr_g",
    "validate",
]
