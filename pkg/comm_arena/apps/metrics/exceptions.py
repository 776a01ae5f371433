"""
Metrics errors.
"""


class EmptySeriesError(ValueError):
    """A statistic was asked of an empty series or an empty log."""


class MismatchedRunsError(ValueError):
    """Run logs being aggregated differ in length."""


class NotCommunicatingError(RuntimeError):
    """A message statistic was requested for predators that do not talk."""
