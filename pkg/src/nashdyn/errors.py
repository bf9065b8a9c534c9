"""Exception types shared across the package."""


class EvaluationError(RuntimeError):
    """An oracle produced a non-finite value or was called outside its domain."""


class NumericError(RuntimeError):
    """A linear solve or eigensolver failed (singular system, non-convergence)."""


class SetError(RuntimeError):
    """A constraint-set operation failed (e.g. empty intersection)."""


class ConfigError(ValueError):
    """An experiment configuration file is missing, malformed, or inconsistent."""
