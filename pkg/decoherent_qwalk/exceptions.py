"""Exceptions raised by the decoherent quantum walk simulator."""

from __future__ import annotations

from typing import Any


class QuantumWalkError(Exception):
    """Base class for simulator errors."""


class CapacityExceededError(QuantumWalkError):
    """The wavefunction support reached the sentinel cells of its window."""


class InvalidStateError(QuantumWalkError, ValueError):
    """The state cannot be measured (all amplitudes zero)."""


class OutOfDomainError(QuantumWalkError, ValueError):
    """A parameter lies outside the open domain of a closed-form formula."""


class ConfigError(QuantumWalkError, ValueError):
    """Invalid or conflicting experiment configuration."""


class FitFailedError(QuantumWalkError):
    """A nonlinear fit did not converge.

    ``diagnostics`` holds the last iterate, iteration count and residual norm
    so that callers can log or export them.
    """

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None) -> None:
        super().__init__(message)
        self.diagnostics: dict[str, Any] = diagnostics or {}
