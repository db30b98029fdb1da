"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line: 2 for usage,
3 for data problems and 4 for numerical failures.
"""


class StreamregError(Exception):
    exit_code = 1


class UsageError(StreamregError):
    exit_code = 2


class DataError(StreamregError):
    exit_code = 3


class NumericError(StreamregError):
    exit_code = 4


class DimensionMismatch(UsageError):
    pass


class ArityMismatch(UsageError):
    pass


class UnderIdentified(UsageError):
    pass


class NegativeLambda(UsageError):
    pass


class TooFewFolds(UsageError):
    pass


class TooFewGroups(UsageError):
    pass


class UnknownGroup(UsageError):
    pass


class MissingColumn(DataError):
    pass


class EmptyFile(DataError):
    pass


class IoError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, row: int, column: str, token: object):
        self.row = row
        self.column = column
        self.token = token
        super().__init__(f"row {row}, column {column!r}: cannot parse {token!r}")


class NegativeWeight(DataError):
    pass


class NonBinaryOutcome(DataError):
    pass


class StreamChanged(DataError):
    pass


class UnbalancedPanel(DataError):
    pass


class TooManyGroups(DataError):
    pass


class SingletonCluster(DataError):
    """A single cluster makes the cluster-robust estimator undefined."""


class RankDeficient(NumericError):
    pass


class InsufficientObservations(NumericError):
    pass


class NotConverged(NumericError):
    pass


class AllReplicatesSingular(NumericError):
    pass
