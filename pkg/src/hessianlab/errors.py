"""Exception hierarchy shared by the kernel, discretization, solver and harness."""

from __future__ import annotations


class HessianLabError(Exception):
    """Base class for every error raised by this package."""


class DomainError(HessianLabError, ValueError):
    """An argument lies outside the domain of the operation."""


class UnsupportedDomainError(DomainError):
    """The operation is only implemented for some domain shapes."""


class ParameterError(HessianLabError, ValueError):
    """A model parameter violates its stated range."""


class AdmissibilityError(HessianLabError, ValueError):
    """A matrix or spectrum is not in the required Garding cone.

    ``verdict`` carries the :class:`~hessianlab.symfun.ConeVerdict` that failed.
    """

    def __init__(self, message, verdict=None):
        super().__init__(message)
        self.verdict = verdict


class DegeneracyError(HessianLabError, ArithmeticError):
    pass


class InsufficientDataError(HessianLabError, ValueError):
    pass


class ResolutionError(HessianLabError, ValueError):
    """Mesh width too coarse for the requested domain."""


class AssemblyError(HessianLabError, RuntimeError):
    pass


class NumericalError(HessianLabError, RuntimeError):
    pass


class ScaleError(NumericalError):
    pass


class SafeguardError(NumericalError):
    """Newton backtracking could not keep the iterate admissible.

    The partially converged ``report`` and ``field`` are attached so callers
    can record them.
    """

    def __init__(self, message, report=None, field=None):
        super().__init__(message)
        self.report = report
        self.field = field


class ConfigError(HessianLabError, KeyError):
    """Bad experiment configuration; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key

    def __str__(self):
        return self.args[0]
