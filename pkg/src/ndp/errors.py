"""Exception types shared across the package."""

from __future__ import annotations


class NdpError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(NdpError, ValueError):
    """Invalid or inconsistent configuration."""


class DomainError(NdpError, ValueError):
    """An input lies outside the domain of an operation (e.g. a non-finite phase)."""


class ShapeError(NdpError, ValueError):
    """Array shapes do not agree with each other or with the configuration."""


class SingularBasisError(NdpError, ArithmeticError):
    """The basis-function normaliser is too close to zero."""


class IntegrationDivergedError(NdpError, FloatingPointError):
    """The integrator produced a non-finite state."""


class NumericalError(NdpError, FloatingPointError):
    """A training loop hit a non-finite loss or gradient."""


class ContractError(NdpError, RuntimeError):
    """An object was used in a way its contract forbids (e.g. stepping a finished episode)."""
