"""Exception types raised across the package."""


class OpSphereError(Exception):
    """Base class for all errors raised by opsphere."""


class ZeroVector(OpSphereError, ValueError):
    pass


class DimensionMismatch(OpSphereError, ValueError):
    pass


class DomainError(OpSphereError, ValueError):
    pass


class DegenerateUpdate(OpSphereError, ArithmeticError):
    pass


class NotStable(OpSphereError, ValueError):
    pass


class NotActive(OpSphereError, ValueError):
    pass


class NotOdd(OpSphereError, ValueError):
    pass


class IndexOutOfRange(OpSphereError, IndexError):
    pass


class InvalidParams(OpSphereError, ValueError):
    pass


class InvalidSpec(InvalidParams):
    pass


class NotInactive(OpSphereError, ValueError):
    """An epsilon-active pair exists where an inactive configuration was required."""


class StructureViolation(OpSphereError, RuntimeError):
    """A structural guarantee failed to hold (tolerance too loose, runaway script, ...)."""


class WrongArity(OpSphereError, ValueError):
    pass


class NoProgress(OpSphereError, ValueError):
    pass


class PreconditionViolated(OpSphereError, ValueError):
    pass


class IoError(OpSphereError, OSError):
    """Reading or writing an input/output file failed."""
