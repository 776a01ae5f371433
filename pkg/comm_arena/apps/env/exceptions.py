"""
Exceptions raised by the predator-prey environment.
"""


class EpisodeFinishedError(RuntimeError):
    """``step`` was called on a state whose episode is already over."""


class UnexpectedMessageError(ValueError):
    """Messages were handed to an observer that cannot hear them."""
