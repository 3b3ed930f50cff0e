"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class EmptySupportError(DomainError):
    def __init__(self, message: str = "empty-support"):
        super().__init__(message)


class ValidationError(ValueError):
    """Invalid model input. ``problems`` lists every issue found, not just the first."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ConvexityError(DomainError):
    pass


class NotImplementableError(RuntimeError):
    """Raised when a structure admits no interior equilibrium.

    ``result`` carries the solver diagnostics when available.
    """

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class ConvergenceError(RuntimeError):
    pass


class CapExceededError(DomainError):
    """Structure enumeration would exceed the configured block cap."""

    def __init__(self, blocks: int, cap: int, count: int):
        self.blocks, self.cap, self.count = blocks, cap, count
        super().__init__(f"{blocks} blocks exceeds cap {cap}; enumeration would produce {count} structures")
