# core/exceptions.py
from __future__ import annotations


class GmleError(Exception):
    """Base class for every domain error raised by the core app."""


class DomainError(GmleError, ValueError):
    """A parameter point or an outcome lies outside its declared domain."""


class ContractViolation(GmleError, ValueError):
    """An operation was called with an argument its contract excludes."""


class SingularParameterError(GmleError):
    """P_theta(A) = 0, so the truncated density is undefined."""


class UnsupportedError(GmleError):
    """The model has no function h for the configured eta."""


class ImpossibleOutcomeError(GmleError):
    """An observed outcome has zero probability under every grid point."""

    def __init__(self, outcome, message: str | None = None):
        self.outcome = outcome
        super().__init__(message or f"Outcome {outcome} is impossible under every grid point.")


class NumericalFailureError(GmleError):
    """The log-likelihood became non-finite."""


class CapacityError(GmleError):
    """A requested grid is larger than the solver accepts."""


class UndefinedPosteriorError(GmleError):
    """The fitted marginal of an outcome is zero, so its posterior is undefined."""


class DegenerateDataError(GmleError):
    """The data leave nothing to fit (e.g. all strata are nonresponse)."""


class TruncationError(GmleError):
    """The Poisson response-count cap leaks too much probability mass."""


class ExperimentError(GmleError):
    """Too many replications of an experiment failed."""


class MalformedInputError(GmleError, ValueError):
    """A data file does not follow its schema."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
