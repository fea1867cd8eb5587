"""Exception hierarchy shared across linklens."""

from __future__ import annotations


class LinkLensError(Exception):
    """Base class for every error raised by linklens."""


class FormatError(LinkLensError, ValueError):
    """A scalar value (address, hash, amount) is malformed."""


class SchemaError(LinkLensError, ValueError):
    """A required column is missing from an input file."""

    def __init__(self, column: str, path: str | None = None) -> None:
        where = f" in {path}" if path else ""
        super().__init__(f"missing required column {column!r}{where}")
        self.column = column
        self.path = path


class IntegrityError(LinkLensError, ValueError):
    """Input violates a dataset-level uniqueness constraint."""

    def __init__(self, message: str, keys: list[str] | None = None) -> None:
        super().__init__(message)
        self.keys = list(keys or [])


class ParameterError(LinkLensError, ValueError):
    """An analysis parameter is out of range."""


class EmptyDatasetError(ParameterError):
    """The analysis needs at least one (valid) transaction."""


class UnsupportedModeError(LinkLensError, ValueError):
    """The operation is not defined for the requested component mode."""


class CapabilityError(LinkLensError):
    """The dataset lacks the input needed by the requested analysis."""

    def __init__(self, message: str, missing: str) -> None:
        super().__init__(message)
        self.missing = missing


class SpecError(LinkLensError, ValueError):
    """A synthetic scenario specification cannot be satisfied."""

    def __init__(self, message: str, plant_id: str | None = None) -> None:
        super().__init__(message)
        self.plant_id = plant_id
