"""
Exceptions raised by the network engine.
"""


class ShapeMismatchError(ValueError):
    """An input, gradient or parameter array does not fit the network."""


class NonFiniteParameterError(ValueError):
    """A layer was built from NaN or infinite parameter values."""


class NonFiniteGradientError(FloatingPointError):
    """An optimizer step was asked to apply a NaN or infinite gradient."""
