"""Exception hierarchy.

Every error belongs to one of three families whose ``exit_code`` the
command line maps onto process exit status: configuration (2), data (3)
and solver (4).
"""


class ScaleIrlError(Exception):
    exit_code = 1


class ConfigError(ScaleIrlError):
    exit_code = 2


class DataError(ScaleIrlError):
    exit_code = 3


class SolverError(ScaleIrlError):
    exit_code = 4


class InvalidConfig(ConfigError):
    pass


class ScaleDoesNotDivideSession(ConfigError):
    pass


class _LineError(DataError):
    def __init__(self, line, message=""):
        self.line = line
        super().__init__(f"line {line}: {message}" if message else f"line {line}")


class MalformedRow(_LineError):
    pass


class CrossedQuote(_LineError):
    pass


class NonMonotoneTime(_LineError):
    pass


class EmptyInput(DataError):
    pass


class TooFewPeriods(DataError):
    pass


class TooFewSamples(DataError):
    pass


class KTooLarge(DataError):
    pass


class DegenerateInput(DataError):
    pass


class NonFiniteReturn(DataError):
    pass


class AlignmentMismatch(DataError):
    pass


class InvalidStateId(DataError):
    pass


class EmptyTrajectories(DataError):
    pass


class UnequalLengths(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class TooFewStates(DataError):
    pass


class MissingReward(DataError):
    pass


class NonFiniteTheta(SolverError):
    pass


class NonStochasticPolicy(SolverError):
    pass


class DivergenceDetected(SolverError):
    pass


class IoError(DataError):
    pass
