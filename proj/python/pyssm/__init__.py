"""Spectral submanifolds of mechanical models with black-box nonlinearities."""

from ._core import (
    NumericalError,
    Ssm,
    Table,
    ValidationError,
    compute,
    default_config,
    list_models,
    run,
    validate_config,
    verify,
)

__all__ = [
    "NumericalError",
    "Ssm",
    "Table",
    "ValidationError",
    "compute",
    "default_config",
    "list_models",
    "run",
    "validate_config",
    "verify",
]
