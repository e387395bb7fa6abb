"""Exception hierarchy shared across the workbench."""


class SimbenchError(Exception):
    """Base class for all workbench errors."""


class BackendError(SimbenchError):
    """Completion backend failed (transport, empty payload, retries exhausted)."""


class ParseError(SimbenchError):
    """A structured payload could not be recovered from model text."""


class DatasetError(SimbenchError):
    """Unreadable or malformed interaction data."""


class ConfigError(SimbenchError):
    """Run configuration failed validation.

    ``fields`` lists every offending field so a single run surfaces all
    problems at once.
    """

    def __init__(self, fields):
        self.fields = list(fields)
        super().__init__("invalid config: " + "; ".join(self.fields))


class InvariantViolation(SimbenchError):
    """A documented invariant was broken at runtime (e.g. title leak)."""


class OptimizationAborted(SimbenchError):
    """Profile optimization failed mid-run; carries the partial trace."""

    def __init__(self, message, trace):
        self.trace = trace
        super().__init__(message)
