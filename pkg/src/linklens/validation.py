"""Argument checks shared by the estimator wrappers and the CLI."""

from __future__ import annotations

import numbers
from pathlib import Path
from typing import Any

from .errors import ParameterError
from .graph import Mode
from .ingest import BundleLoad, Dataset, load_bundle


def check_dataset(X: Any) -> Dataset:
    """Accept a Dataset, a BundleLoad or a bundle directory path."""
    if isinstance(X, Dataset):
        return X
    if isinstance(X, BundleLoad):
        return X.dataset
    if isinstance(X, (str, Path)):
        return load_bundle(X).dataset
    raise ParameterError(f"expected a Dataset or a bundle directory, got {type(X).__name__}")


def check_positive_int(name: str, value: Any, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ParameterError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ParameterError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_real(name: str, value: Any, minimum: float = 0.0, maximum: float | None = None) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or value != value:
        raise ParameterError(f"{name} must be a real number, got {value!r}")
    if value < minimum or (maximum is not None and value > maximum):
        hi = "inf" if maximum is None else maximum
        raise ParameterError(f"{name} must lie in [{minimum}, {hi}], got {value}")
    return float(value)


def check_mode(value: Any) -> Mode:
    try:
        return Mode(value)
    except ValueError:
        raise ParameterError(f"mode must be 'weak' or 'strong', got {value!r}") from None
