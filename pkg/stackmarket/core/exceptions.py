"""Typed errors raised by the solver operations.

Each error carries the process exit code the CLI maps it to.
"""
from typing import Any, Optional


class StackMarketError(Exception):
    """Base class for every error raised by stackmarket"""

    exit_code = 1


class InvalidRange(StackMarketError):
    """A count or distribution range is unusable"""


class NonPositiveBase(StackMarketError):
    """The SSIM bitrate base (1 - SSIM)/(k1 + k2 v) is not positive"""


class ZeroExponentDenominator(StackMarketError):
    """k3 + k4 v vanishes"""


class OutOfRange(StackMarketError):
    """A bandwidth argument lies outside [0, s_max]"""


class PriceBelowFloor(StackMarketError):
    """A price sits below the positive price floor"""


class ClampedRegime(StackMarketError):
    """The analytic revenue derivative is undefined because a follower buys nothing"""


class InvalidPartition(StackMarketError):
    """A partition point set is not strictly increasing from 0 to p_max"""


class TooLarge(StackMarketError):
    """The brute-force oracle would exceed its evaluation budget"""


class ScenarioIOError(StackMarketError):
    """A scenario or result file could not be read or written"""

    exit_code = 4


class Infeasible(StackMarketError):
    """No feasible association exists"""

    exit_code = 3


class NotConverged(StackMarketError):
    """Best-response dynamics hit max_iters; `result` holds the partial run"""

    exit_code = 2

    def __init__(self, message: str, result: Optional[Any] = None):
        super().__init__(message)
        self.result = result


class RoundLimit(StackMarketError):
    """Bound tightening ran out of rounds; `solution` holds the best incumbent"""

    exit_code = 2

    def __init__(self, message: str, solution: Optional[Any] = None, gap: float = float("inf")):
        super().__init__(message)
        self.solution = solution
        self.gap = gap
