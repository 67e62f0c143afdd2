"""Exception types shared across the package."""

from __future__ import annotations


class GenromError(Exception):
    """Base class for all package-specific failures."""


class ConfigurationError(GenromError):
    """Invalid or inconsistent configuration input."""


class IntegrationError(GenromError):
    """Newton iteration failed to converge inside the time stepper.

    Carries the failing step index so callers can report where a run died.
    """

    def __init__(self, message: str, step: int = -1):
        super().__init__(message)
        self.step = step


class GeometryError(GenromError):
    """Subspace geometry operation left its domain of validity."""


class StaleWeightsError(GenromError):
    """Element weights were computed against a different reduction basis."""


class PredictionError(GenromError):
    """Ensemble prediction lost too many members to produce a result."""
