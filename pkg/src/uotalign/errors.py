"""Exception types shared across the package."""


class UOTAlignError(Exception):
    """Base class for all package errors."""


class ShapeError(UOTAlignError, ValueError):
    """Array shapes or lengths are inconsistent."""


class ConfigError(UOTAlignError, ValueError):
    """A configuration value is out of its valid range."""


class DomainError(UOTAlignError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class SizeError(UOTAlignError, ValueError):
    """An instance is too large for an exhaustive oracle."""


class InfeasibleError(UOTAlignError, ValueError):
    """The problem has no feasible solution."""


class SolverError(UOTAlignError, ArithmeticError):
    """A scaling iteration produced a non-finite value."""


class TrainingDivergedError(UOTAlignError, ArithmeticError):
    """Training produced a non-finite loss."""


class InputFormatError(UOTAlignError, ValueError):
    """An input file is malformed."""
