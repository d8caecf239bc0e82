"""Exception hierarchy shared by every featgen module."""


class FeatGenError(Exception):
    """Base class for all featgen errors."""


class ShapeError(FeatGenError, ValueError):
    """Operands with incompatible dimensions."""


class ParameterError(FeatGenError, ValueError):
    """A scalar or count argument outside its valid range."""


class DataError(FeatGenError, ValueError):
    """Dataset content violates a documented invariant."""


class SplitError(DataError):
    """Seen/unseen split is inconsistent (e.g. overlapping classes)."""


class FormatError(FeatGenError, ValueError):
    """A binary or JSON file is malformed; messages name the byte offset or key."""


class ConfigError(FeatGenError, ValueError):
    """Unknown or ill-typed configuration key."""


class UsageError(FeatGenError, RuntimeError):
    """API misuse, e.g. a stale forward tape handed to backward."""


class NumericalError(FeatGenError, ArithmeticError):
    """Non-finite loss or parameters during training."""


class SolverError(FeatGenError, ArithmeticError):
    """A linear system could not be solved."""
