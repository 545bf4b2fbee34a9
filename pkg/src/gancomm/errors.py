"""Shared exception types.

Every module raises one of these so callers (and the CLI exit-code
mapping) can tell configuration mistakes apart from runtime failures.
"""


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class ConfigError(ValueError):
    """Invalid configuration value (bad layer kind, non-positive lr, ...)."""


class DomainError(ValueError):
    """Value outside the mathematical domain of an operation."""


class FramingError(ValueError):
    """Bit/symbol stream has the wrong length for the requested framing."""


class ContractError(RuntimeError):
    """An API precondition was violated (e.g. backward on a non-scalar)."""


class NumericalAbort(RuntimeError):
    """Training produced NaN/Inf; a diagnostic checkpoint was written."""
