"""Exception types. Each carries a short machine-readable code."""

from __future__ import annotations


class LiquiforgeError(Exception):
    """Base class for all engine errors."""

    code = "ERROR"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


class NotOnGridError(LiquiforgeError):
    code = "NOT_ON_GRID"


class DegenerateError(LiquiforgeError):
    code = "DEGENERATE"


class NegativeTimeOrderError(LiquiforgeError):
    code = "NEGATIVE_TIME_ORDER"


class InvalidSpecError(LiquiforgeError):
    code = "INVALID_SPEC"


class MissingNumeraireError(LiquiforgeError):
    code = "MISSING_NUMERAIRE"


class GridMismatchError(LiquiforgeError):
    code = "GRID_MISMATCH"


class EmptyScheduleError(LiquiforgeError):
    code = "EMPTY_SCHEDULE"


class NonAdaptedTriggerError(LiquiforgeError):
    code = "NON_ADAPTED_TRIGGER"


class SingularRegressionError(LiquiforgeError):
    code = "SINGULAR_REGRESSION"


class BumpTooSmallError(LiquiforgeError):
    code = "BUMP_TOO_SMALL"


class NonIndependentStreamError(LiquiforgeError):
    code = "NON_INDEPENDENT_STREAM"


class MaturitySetMismatchError(LiquiforgeError):
    code = "MATURITY_SET_MISMATCH"


class SingularMarketError(LiquiforgeError):
    code = "SINGULAR_MARKET"


class MissingProfileError(LiquiforgeError):
    code = "MISSING_PROFILE"


class HedgeInitMismatchError(LiquiforgeError):
    code = "HEDGE_INIT_MISMATCH"


class InsufficientRefinementsError(LiquiforgeError):
    code = "INSUFFICIENT_REFINEMENTS"


class GapBeyondHorizonError(LiquiforgeError):
    code = "GAP_BEYOND_HORIZON"


class MissingInputError(LiquiforgeError):
    code = "MISSING_INPUT"


class CurveSupportError(LiquiforgeError):
    code = "CURVE_SUPPORT"


class ConfigError(LiquiforgeError):
    code = "CONFIG_INVALID"


class UnknownDemoError(LiquiforgeError):
    code = "UNKNOWN_DEMO"


class AssertionFailedError(LiquiforgeError):
    code = "ASSERTION_FAILED"
