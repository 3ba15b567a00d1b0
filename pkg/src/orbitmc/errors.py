"""Exception types shared across the package."""


class MalformedInputError(ValueError):
    """Raised when an input file or dataset fails validation."""


class NumericalFailureError(RuntimeError):
    """Non-finite value encountered while iterating a deterministic map.

    Carries the last valid state (if any) in ``state`` so callers can
    reject the move instead of crashing the chain.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class DegenerateKernelError(RuntimeError):
    """The diffusing-kernel constant c is zero (unbounded orbit weights).

    The escaping kernel is the complementary choice for such orbits.
    """


class WindowTooSmallError(RuntimeError):
    """Probability mass reached the edge of a truncated orbit window."""
