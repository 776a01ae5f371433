"""
Exceptions raised by the training loop.
"""


class WrongModeError(RuntimeError):
    """An update was requested that the experiment configuration does not run."""


class TrainingDivergedError(RuntimeError):
    """A loss or reward became NaN or infinite."""
