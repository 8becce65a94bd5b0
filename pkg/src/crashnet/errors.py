"""Exception hierarchy. Each family maps to a CLI exit code."""

from __future__ import annotations


class CrashnetError(Exception):
    exit_code = 1
    stage = "unknown"


class ConfigError(CrashnetError):
    exit_code = 2
    stage = "config"


class DataError(CrashnetError, ValueError):
    exit_code = 3
    stage = "data"


class NumericalError(CrashnetError, ArithmeticError):
    exit_code = 4
    stage = "numerical"


class NotEnoughExtrema(NumericalError):
    """Raised when a series has too few extrema to build spline envelopes."""


class SingularCorrelation(NumericalError):
    pass


class NoCrashDetected(DataError):
    pass


class NotACrash(DataError):
    pass
