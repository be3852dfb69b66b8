"""Exception types raised by replica_cs."""


class ReplicaError(Exception):
    """Base class for all errors raised by this package."""


class DegeneratePrior(ReplicaError, ValueError):
    """The prior has zero variance."""


class InvalidWeight(ReplicaError, ValueError):
    """A mixture weight is non-positive or the weights do not sum to one."""


class OutOfRange(ReplicaError, ValueError):
    """An argument lies outside the domain of the requested function."""


class DomainError(ReplicaError, ValueError):
    """A bound was requested outside the range where it holds."""


class QuadratureFailure(ReplicaError, ArithmeticError):
    """Adaptive refinement did not reach the requested tolerance."""


class GridTooCoarse(ReplicaError, ArithmeticError):
    """Two sign changes are too close together to be resolved on the scan grid."""


class NoConvergence(ReplicaError, ArithmeticError):
    """An iteration stopped at its iteration cap before converging.

    The last iterate is kept on ``.value`` together with ``.iterations``.
    """

    def __init__(self, message, value=None, iterations=None):
        super().__init__(message)
        self.value = value
        self.iterations = iterations


class EnumerationTooLarge(ReplicaError, ValueError):
    """Exact posterior enumeration would exceed the configured state limit."""


class TieAtMinimum(ReplicaError):
    """Two stable fixed points attain the global minimum of the potential.

    Carries ``delta`` and the two minimizers ``z_low``, ``z_high`` together with
    their potential values, so callers can treat the point as a phase transition.
    """

    def __init__(self, delta, z_low, r_low, z_high, r_high):
        super().__init__(
            f"tie at delta={delta:.12g}: R({z_low:.6g})={r_low:.15g}, "
            f"R({z_high:.6g})={r_high:.15g}"
        )
        self.delta = delta
        self.z_low = z_low
        self.r_low = r_low
        self.z_high = z_high
        self.r_high = r_high
