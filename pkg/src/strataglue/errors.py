"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or inconsistent input data."""


class RangeError(InputError):
    """A numeric argument lies outside its admissible range."""


class UnsupportedDimensionError(InputError):
    """Moduli data of dimension >= 2 cannot be imported."""


class EpsilonUnderflowError(RuntimeError):
    """Collar width shrank below the hard floor during construction."""

    def __init__(self, message, epsilon=None):
        super().__init__(message)
        self.epsilon = epsilon
