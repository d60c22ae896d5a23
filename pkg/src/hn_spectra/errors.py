"""Exception hierarchy shared by the numerical modules and the CLI."""


class HNError(Exception):
    """Base class for all package errors."""


class ConfigError(HNError, ValueError):
    """Invalid run configuration or invalid user input (CLI exit code 2)."""


class NumericalFailure(HNError):
    """A computation could not deliver a trustworthy result (CLI exit code 3).

    ``report`` carries the failing module's diagnostics as a JSON-compatible dict.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = dict(report or {})
        self.report.setdefault("message", message)


class RegimeError(NumericalFailure):
    """The requested energy is not in the regime the construction needs."""


class EigenSolverError(NumericalFailure):
    """Dense eigensolver failed to converge for some eigenvalue indices."""
