"""Exception hierarchy shared by all modules."""


class TorusRenormError(Exception):
    """Base class for every error raised by the package."""


class DomainError(TorusRenormError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class InvariantViolation(TorusRenormError):
    """A declared invariant of a data type failed to hold."""


class FlowOverflowError(TorusRenormError, OverflowError):
    """Lattice-flow entries left the representable range."""

    def __init__(self, time, message=None):
        self.time = float(time)
        super().__init__(message or f"lattice flow overflow at t={self.time:.6g}")


class EmptyExpansionError(TorusRenormError):
    """No stopping time was found in the requested window."""


class PrecisionError(TorusRenormError):
    """A numerical refinement could not resolve its target."""

    def __init__(self, message, interval=None):
        self.interval = interval
        super().__init__(message)


class ResonanceError(DomainError):
    """The frequency vector is resonant within the checked radius."""


class RationalInputError(DomainError):
    """A real number expected to be irrational is rational at working precision."""


class MalformedScheduleError(TorusRenormError, ValueError):
    """A sigma schedule produces an undefined series term."""

    def __init__(self, n, message):
        self.n = n
        super().__init__(f"step {n}: {message}")


class TruncationOverflowError(TorusRenormError):
    """A reindexed Fourier mode left the truncation ball."""

    def __init__(self, index, degree):
        self.index = tuple(int(v) for v in index)
        self.degree = int(degree)
        super().__init__(
            f"mode {self.index} has l1 degree above trunc_degree {self.degree}"
        )


class NearSingularMapError(TorusRenormError):
    """The Jacobian of a torus map is too close to singular."""

    def __init__(self, min_det, factor=None):
        self.min_det = float(min_det)
        self.factor = factor
        where = "" if factor is None else f" (factor {factor})"
        super().__init__(f"|det Dpsi| reached {self.min_det:.3g} < 0.1{where}")


class BoundViolation(TorusRenormError, AssertionError):
    """A rigorous operator bound failed numerically."""

    def __init__(self, name, lhs, rhs):
        self.name = name
        self.lhs = float(lhs)
        self.rhs = float(rhs)
        super().__init__(f"{name}: lhs={self.lhs:.6e} > rhs={self.rhs:.6e}")


class NonConvergenceError(TorusRenormError):
    """An iteration exhausted its budget above tolerance."""

    def __init__(self, message, history=()):
        self.history = list(history)
        super().__init__(message)


class AccuracyError(TorusRenormError):
    """An integrator's error estimate exceeded its budget."""


class StepFailure(TorusRenormError):
    """A renormalization step failed; ``stage`` names where."""

    def __init__(self, stage, n, message, cause=None):
        self.stage = stage
        self.n = n
        self.cause = cause
        super().__init__(f"step {n} failed at {stage}: {message}")


class PreconditionError(TorusRenormError, ValueError):
    """A documented precondition was violated; both sides are quoted."""

    def __init__(self, name, lhs, rhs):
        self.name = name
        self.lhs = float(lhs)
        self.rhs = float(rhs)
        super().__init__(f"{name}: {self.lhs:.6e} is not below {self.rhs:.6e}")


class ConfigError(TorusRenormError, ValueError):
    """A run configuration is malformed."""
