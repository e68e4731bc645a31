"""Exception types shared across the package."""


class ContractError(ValueError):
    """An operation was called outside its documented preconditions."""


class ShapeError(ContractError):
    """Operand shapes do not conform."""


class NumericError(ArithmeticError):
    """A computation produced NaN or Inf."""


class ConfigError(ValueError):
    """An invalid configuration value or file."""
