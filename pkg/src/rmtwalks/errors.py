"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    pass


class DomainError(ValueError):
    pass


class NotPositiveDefiniteError(ArithmeticError):
    def __init__(self, pivot_index, message=None):
        self.pivot_index = pivot_index
        super().__init__(message or f"non-positive pivot at index {pivot_index}")


class InsufficientPrecisionError(ArithmeticError):
    def __init__(self, message, required_bits=None):
        self.required_bits = required_bits
        super().__init__(message)


class TruncationFailureError(ArithmeticError):
    pass


class InfeasibleRejectionError(RuntimeError):
    pass


class TuningFailureError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)
