"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand dimensions violate an operation's shape contract."""


class ConfigError(ValueError):
    """Invalid configuration (head counts, modes, hyperparameters, schema)."""


class ContractError(ValueError):
    """An API precondition other than a shape was violated."""


class FormatError(ValueError):
    """A binary or text file does not match its documented format."""


class NumericsError(FloatingPointError):
    """A non-finite value appeared while debug checks were active."""
