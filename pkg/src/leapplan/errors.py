"""Exception types raised across the package."""


class LeapPlanError(Exception):
    """Base class for all package errors."""


class SingularOrientation(LeapPlanError):
    pass


class UnknownGait(LeapPlanError, ValueError):
    pass


class Unreachable(LeapPlanError):
    """Landing height cannot be reached from the liftoff state."""


class DegenerateTiming(LeapPlanError):
    pass


class InconsistentInput(LeapPlanError, ValueError):
    pass


class DimensionMismatch(LeapPlanError, ValueError):
    pass


class QpInfeasible(LeapPlanError):
    pass


class QpUnbounded(LeapPlanError):
    pass


class MaxIterationsExceeded(LeapPlanError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class LineSearchFailure(LeapPlanError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class RotationErrorTooLarge(LeapPlanError):
    pass


class RiccatiBlowup(LeapPlanError):
    pass


class ScheduleExpired(LeapPlanError):
    pass


class NoTouchdown(LeapPlanError):
    pass


class ConfigError(LeapPlanError, ValueError):
    pass
