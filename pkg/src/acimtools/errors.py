"""Exception hierarchy shared by every module of the toolkit."""


class AcimError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(AcimError, ValueError):
    """Bad input or configuration (CLI exit code 2)."""


class NumericalFailure(AcimError, RuntimeError):
    """A numerical routine failed to reach its target (CLI exit code 3)."""


# map_model
class PointOnBoundary(ValidationError):
    pass


class OutOfDomain(ValidationError):
    pass


class NoRoot(NumericalFailure):
    pass


class NotMonotone(NumericalFailure):
    pass


class DegenerateProbe(ValidationError):
    pass


# example_maps
class BadSpec(ValidationError):
    pass


# induction
class NotInRegion(ValidationError):
    pass


class Overflow(NumericalFailure):
    pass


class EmptyWindow(ValidationError):
    pass


class NonPositiveTail(ValidationError):
    pass


# transfer
class BadResolution(ValidationError):
    pass


class NoConvergence(NumericalFailure):
    def __init__(self, msg, last=None, residual=None):
        super().__init__(msg)
        self.last = last
        self.residual = residual


class PartitionMismatch(ValidationError):
    pass


class InverseFailure(NumericalFailure):
    pass


class InsufficientFit(ValidationError):
    pass


# quasi_holder
class EpsTooSmall(ValidationError):
    pass


class EpsGridEmpty(ValidationError):
    pass


class DegenerateFamily(ValidationError):
    pass


# asymptotics
class OrbitTooShort(ValidationError):
    pass


class DegenerateVectors(ValidationError):
    pass


# assumption_audit
class BadRadii(ValidationError):
    pass


class EmptyTable(ValidationError):
    pass
