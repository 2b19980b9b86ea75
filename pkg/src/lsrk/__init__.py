"""Least-squares RKHS estimation of varying coefficient models from sparse functional data."""

__version__ = "0.1.0"
from ._backend import BACKEND
from .coefficients import CoefficientEstimates, EvaluationGrid, estimate_coefficients, solve_pointwise
from .covariance import CovarianceSet, ProcessKernels, estimate_covariance_set, fit_means
from .data import (
    ColumnSchema,
    LongitudinalDataset,
    SubjectRecord,
    filter_subjects,
    load_longitudinal_csv,
    pooled_observations,
    write_longitudinal_csv,
)
from .exceptions import (
    ConsistencyError,
    ContractError,
    InputError,
    InsufficientDataError,
    LSRKError,
    NumericalError,
    ParseError,
    SchemaError,
    SingularSystemError,
)
from .kernels import FunctionEstimate, Gaussian, Product, evaluate, gram_matrix
from .metrics import MetricsReport, SampledFunction, made, wase
from .selection import SmoothingConfig, cv_select_lambda, select_lambdas_cv
from .simulation import SimulationConfig, TrueCoefficients, run_monte_carlo
from .smoothing import RawTargets, fit_mean_function, fit_regularized

__all__ = [
    "BACKEND", "CoefficientEstimates", "ColumnSchema", "ConsistencyError", "ContractError",
    "CovarianceSet", "EvaluationGrid", "FunctionEstimate", "Gaussian", "InputError",
    "InsufficientDataError", "LSRKError", "LongitudinalDataset", "MetricsReport", "NumericalError",
    "ParseError", "ProcessKernels", "Product", "RawTargets", "SampledFunction", "SchemaError",
    "SimulationConfig", "SingularSystemError", "SmoothingConfig", "SubjectRecord", "TrueCoefficients",
    "cv_select_lambda", "estimate_coefficients", "estimate_covariance_set", "evaluate", "filter_subjects",
    "fit_mean_function", "fit_means", "fit_regularized", "gram_matrix", "load_longitudinal_csv", "made",
    "pooled_observations", "run_monte_carlo", "select_lambdas_cv", "solve_pointwise", "wase",
    "write_longitudinal_csv",
]
