"""Structured increasing shrinkage factor models (C++ core)."""

from ._sisfm import (
    ChainConfig,
    Hyperparameters,
    SisfmError,
    covariance_mse,
    expected_pi,
    fit,
    gaussian_log_likelihood,
    generate_scenario,
    lpml,
    sample_sis_prior,
    sis_column_variance,
    stick_breaking,
)

__all__ = [
    "ChainConfig",
    "Hyperparameters",
    "SisfmError",
    "covariance_mse",
    "expected_pi",
    "fit",
    "gaussian_log_likelihood",
    "generate_scenario",
    "lpml",
    "sample_sis_prior",
    "sis_column_variance",
    "stick_breaking",
]
