"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line front end can map
failures without a lookup table: 1 for usage/config problems, 2 for
numerical failures, 3 for data problems.
"""


class GelcalError(Exception):
    exit_code = 2


# numerical failures -------------------------------------------------------

class NumericalError(GelcalError):
    exit_code = 2


class NotPositiveDefinite(NumericalError):
    pass


class LineSearchStalled(NumericalError):
    pass


class MaxIterations(NumericalError):
    pass


class SingularJacobian(NumericalError):
    pass


class OutOfDomain(NumericalError):
    pass


class DegenerateRho(NumericalError):
    pass


class ThetaAtLimit(NumericalError, ValueError):
    pass


class Separation(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class InfeasibleCalibration(NumericalError):
    pass


# data problems ------------------------------------------------------------

class DataError(GelcalError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class InvariantViolation(DataError):
    pass


class TooFewCompleteCases(DataError):
    pass


class MissingConstantColumn(DataError):
    pass


class UnknownColumn(DataError):
    pass


# usage / configuration ----------------------------------------------------

class ConfigError(GelcalError):
    exit_code = 1


class FormulaSyntaxError(ConfigError):
    """Malformed model formula.

    ``offset`` is the 0-based byte offset of the offending token and
    ``expected`` the set of token kinds that would have been accepted there.
    """

    def __init__(self, message, offset, expected=()):
        self.offset = offset
        self.expected = frozenset(expected)
        exp = ", ".join(sorted(self.expected))
        super().__init__(f"{message} at offset {offset}" + (f" (expected one of: {exp})" if exp else ""))


# warnings -----------------------------------------------------------------

class ExtremePropensity(UserWarning):
    pass


class EmptyInterval(UserWarning):
    pass


class WeightNormalizationWarning(UserWarning):
    pass


class SeparationWarning(UserWarning):
    """A working logistic model is (quasi-)separated; a capped-iteration fit is used."""
