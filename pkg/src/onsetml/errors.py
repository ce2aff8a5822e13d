"""Exception hierarchy.

Every error raised by the toolkit derives from :class:`OnsetError` and carries
the CLI exit code it maps to: 2 for bad data or arguments, 3 for numeric
failures (singular systems, divergence, non-convergence).
"""


class OnsetError(Exception):
    exit_code = 2


class DataError(OnsetError, ValueError):
    exit_code = 2


class NumericError(OnsetError, ArithmeticError):
    exit_code = 3


# numerics
class NotSymmetric(NumericError):
    pass


class SingularMatrix(NumericError):
    def __init__(self, message: str = "", relative_pivot: float = 0.0):
        super().__init__(message)
        self.relative_pivot = relative_pivot  # pivot / original diagonal entry


class NoConvergence(NumericError):
    pass


class ConstantColumn(DataError):
    def __init__(self, name="<column>"):
        super().__init__(f"ConstantColumn: column {name!r} has zero variance")
        self.name = name


class TooFewValues(DataError):
    pass


# dataset
class MissingColumn(DataError):
    def __init__(self, name):
        super().__init__(f"MissingColumn: required column {name!r} not in header")
        self.name = name


class BadValue(DataError):
    def __init__(self, row, column, detail=""):
        msg = f"BadValue: row {row}, column {column!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.row = row
        self.column = column


class LayoutMismatch(DataError):
    pass


class DegenerateSplit(DataError):
    pass


class UnknownColumn(DataError):
    pass


class BadFoldCount(DataError):
    pass


class BadDesign(DataError):
    pass


# regression
class SingularDesign(NumericError):
    pass


class TooFewRows(DataError):
    pass


class FeatureMismatch(DataError):
    pass


class ConstantTarget(DataError):
    pass


# classify
class NoClassVariation(DataError):
    pass


class NotStandardized(DataError):
    pass


class Diverged(NumericError):
    pass


class DimensionMismatch(DataError):
    pass


class LabelOutOfRange(DataError):
    pass


class EmptyMatrix(DataError):
    pass


# unsupervised
class BadK(DataError):
    pass


class EmptyInput(DataError):
    pass


class NotBinary(DataError):
    pass


# validation / sensitivity / cli
class EmptyTable(DataError):
    pass


class EmptyFilter(DataError):
    pass


class UnknownVariable(DataError):
    pass


class MissingArtifact(DataError):
    pass


class UsageError(OnsetError):
    exit_code = 1
