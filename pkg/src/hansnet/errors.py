"""Error taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, NumericalError -> 2,
I/O failures (OSError) -> 3. Everything else is a plain bug.
"""


class HansNetError(Exception):
    """Base class for all package errors."""


class DimensionError(HansNetError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NumericalError(HansNetError, ArithmeticError):
    """A computation produced or would produce non-finite values."""


class ContractError(HansNetError, RuntimeError):
    """An operation was called in a state its contract forbids."""


class ConfigError(HansNetError, ValueError):
    """Invalid or unknown configuration."""


class GenerationError(HansNetError, RuntimeError):
    """A requested phantom geometry could not be realized."""


class FormatError(HansNetError, OSError):
    """A binary file is malformed: bad magic, version, or truncation."""
