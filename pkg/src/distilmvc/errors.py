"""Exception hierarchy shared by every module."""


class DistilMVCError(Exception):
    """Base class for all errors raised by this package."""


class LoadError(DistilMVCError, FileNotFoundError):
    pass


class ParseError(DistilMVCError, ValueError):
    pass


class ShapeError(DistilMVCError, ValueError):
    pass


class RangeError(DistilMVCError, ValueError):
    pass


class ValidationError(DistilMVCError, ValueError):
    pass


class ConfigError(DistilMVCError, ValueError):
    pass


class StructuralError(DistilMVCError, ValueError):
    """Teacher and student parameter sets are not congruent."""


class NumericGuardError(DistilMVCError, ArithmeticError):
    pass


class InfeasibleError(DistilMVCError, ValueError):
    pass


class VersionError(DistilMVCError):
    pass


class IntegrityError(DistilMVCError):
    pass


class StageError(DistilMVCError):
    pass


class NonFiniteLossError(DistilMVCError, FloatingPointError):
    """A loss component became NaN/Inf during training."""
