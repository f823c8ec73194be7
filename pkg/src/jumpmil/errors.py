"""Exception types shared across the package."""


class JumpMilError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(JumpMilError, ValueError):
    pass


class DataCorruptionError(JumpMilError, ValueError):
    pass


class JccError(InvalidArgumentError):
    """Raised when a problem violates the jump-commutativity condition."""


class NumericalOverflowError(JumpMilError, ArithmeticError):
    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")
