"""Exception types shared across the package."""


class GeoproError(Exception):
    """Base class for all package errors."""


class DimensionError(GeoproError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NumericError(GeoproError, ArithmeticError):
    """A computation produced NaN/Inf, or a loss went non-finite."""


class StateError(GeoproError, RuntimeError):
    """An object was used in an order its lifecycle forbids."""


class ContractError(GeoproError, ValueError):
    """A caller violated a documented precondition."""


class ConfigError(GeoproError, ValueError):
    """Invalid or inconsistent configuration values."""


class DomainError(GeoproError, ValueError):
    """A numeric argument is outside its mathematical domain."""


class DegeneracyError(GeoproError, ValueError):
    """Input geometry is too degenerate for the operation (e.g. collinear)."""


class DataError(GeoproError, ValueError):
    """A dataset-level problem: missing ids, empty sets, bad joins."""


class ParseError(GeoproError, ValueError):
    """Malformed input text (PDB, FASTA, CSV, config)."""


class GenerationError(GeoproError, RuntimeError):
    """A stochastic generator failed to satisfy its constraints."""


class ConstructionError(GeoproError, RuntimeError):
    """A rejection-sampled construction exhausted its retry budget."""
