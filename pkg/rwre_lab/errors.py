# ABOUTME: Exception hierarchy shared by the simulation library and the harness.
# ABOUTME: Every named failure of an operation maps to one class here.

from typing import Any, Optional


class RWREError(Exception):
    """Root of all library errors"""


class SpecError(RWREError, ValueError):
    """Invalid environment law, initial law, profile or test function parameters"""


class AssumptionViolation(RWREError):
    """The environment law violates a model assumption (e.g. E_P[rho] >= 1)"""


class DepthExceeded(RWREError):
    """Series truncation needed more terms than the configured hard cap"""


class WindowTooSmall(RWREError):
    """Requested observation region is not covered by the dependence cone"""


class WindowMismatch(RWREError):
    """Two configurations that must share a window do not"""


class ParityError(RWREError):
    """Two walks started at odd separation can never occupy the same site"""


class InsufficientSamples(RWREError):
    """Too few samples for the requested statistic"""


class DegenerateEstimate(RWREError):
    """A probability estimate had zero successes

    Attributes:
        estimate: The one-sided estimate that was produced anyway
    """

    def __init__(self, message: str, estimate: Optional[Any] = None):
        super().__init__(message)
        self.estimate = estimate
