"""Common exception base so callers can catch everything this package raises."""


class PhaseEvalError(Exception):
    """Base class for all errors raised by phaseeval."""
