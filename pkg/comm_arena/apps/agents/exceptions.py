"""
Exceptions raised by agent policies.
"""


class InvalidQValuesError(ValueError):
    """Action selection was handed NaN Q-values."""
