"""Exception taxonomy shared across the toolkit.

Every error raised intentionally by this package derives from PsisError so
callers can catch one type at the boundary.  The subclasses split along the
lines a batch driver needs to map onto distinct exit codes: bad inputs,
evaluation at an invalid point, integrator breakdown, and verification
bookkeeping.
"""

from __future__ import annotations


class PsisError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(PsisError):
    """A parameter set violates its contract (shape, range, or pairing)."""


class DomainError(PsisError):
    """A numeric argument lies outside the domain of the requested map."""


class SingularityError(DomainError):
    """Evaluation was requested at or beyond the prescribed instant."""


class EvaluationError(PsisError):
    """An expression could not be evaluated at the given point."""

    def __init__(self, message: str, node_kind: str | None = None):
        super().__init__(message)
        self.node_kind = node_kind


class StructureError(PsisError):
    """An expression or controller has an internally inconsistent shape."""


class IntegrationError(PsisError):
    """Base class for simulation failures; carries the time of breakdown."""

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


class StiffnessError(IntegrationError):
    """Step-size control collapsed before reaching the end of the span."""


class DivergenceError(IntegrationError):
    """The state left the finite range during integration."""


class AuditError(PsisError):
    """A verification routine was handed evidence it cannot audit."""
