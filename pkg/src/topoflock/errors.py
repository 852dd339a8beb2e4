"""Exception types shared across the package."""
from __future__ import annotations


class TopoflockError(Exception):
    """Base class for all package errors."""


class VacuumError(TopoflockError):
    """Density touched (or fell below) the vacuum threshold."""

    def __init__(self, message, *, step=None, time=None, value=None):
        super().__init__(message)
        self.step = step
        self.time = time
        self.value = value


class InstabilityError(TopoflockError):
    """Non-finite values, quadrature blow-up or time-step underflow."""

    def __init__(self, message, *, step=None, time=None):
        super().__init__(message)
        self.step = step
        self.time = time


class ConfigError(TopoflockError):
    """Malformed or inconsistent scenario configuration."""

    def __init__(self, message, *, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
