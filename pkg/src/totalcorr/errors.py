"""Semantic exceptions shared across the package."""


class TotalCorrError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(TotalCorrError, ValueError):
    """An argument violates a documented precondition."""


class TrainingError(TotalCorrError, RuntimeError):
    """Training produced a non-finite or otherwise unusable state.

    Carries enough context (estimator kind, step, term) to locate the
    failing update in a long run.
    """

    def __init__(self, message, *, kind=None, step=None, term=None):
        detail = message
        tags = []
        if kind is not None:
            tags.append(f"estimator={kind}")
        if term is not None:
            tags.append(f"term={term}")
        if step is not None:
            tags.append(f"step={step}")
        if tags:
            detail = f"{message} [{', '.join(tags)}]"
        super().__init__(detail)
        self.kind = kind
        self.step = step
        self.term = term


class TraceParseError(TotalCorrError, ValueError):
    """A trace or metrics CSV is malformed; names the offending line."""

    def __init__(self, path, line_number, message):
        super().__init__(f"{path}: line {line_number}: {message}")
        self.path = str(path)
        self.line_number = line_number


class ConfigError(TotalCorrError, ValueError):
    """An experiment config file is missing, unreadable, or invalid."""
