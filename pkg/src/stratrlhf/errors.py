class StratRLHFError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(StratRLHFError, ValueError):
    """Invalid configuration value (bad dimension, bound, delta, ...)."""


class InputError(StratRLHFError, ValueError):
    """Malformed input to an operation (empty data, shape mismatch, ...)."""


class NumericError(StratRLHFError, ArithmeticError):
    """Non-finite inputs or a singular matrix where an invertible one is required."""


class CapacityError(StratRLHFError, RuntimeError):
    """Problem instance too large for every available solver path."""
