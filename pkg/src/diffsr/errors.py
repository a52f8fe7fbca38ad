"""Exception types shared across the library."""


class NumericsError(RuntimeError):
    """Raised when a computation fails numerically (singular system, underflow)."""


class DivergenceError(RuntimeError):
    """Raised when an SDE trajectory leaves the set of finite states."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index
