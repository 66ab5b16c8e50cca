"""Exception types shared across agrowatch modules."""


class ValidationError(ValueError):
    """Input violates a documented precondition or invariant."""


class FrameError(ValueError):
    """Base class for sensor frame decode failures."""


class BadSync(FrameError):
    pass


class BadCrc(FrameError):
    pass


class Truncated(FrameError):
    pass


class UnknownKind(FrameError):
    pass


class PlanError(RuntimeError):
    """Raised when no usable mission can be produced."""


class EmptyPlan(PlanError):
    pass


class InfeasiblePlan(PlanError):
    pass
